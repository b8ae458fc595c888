"""Byte-level BPE: trainer, encoder, decoder, and the vocabulary file format.

The base vocabulary is the 256 byte values; merge rule k creates token id
256 + k. Training bias is the point: a vocabulary trained on an unbalanced
bilingual corpus compresses the majority language better, which shows up as
a higher bytes-per-token density for it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from tokenleak._kernels import apply_merge, count_pairs, encode_ids

VOCAB_FORMAT_TAG = "tokenleak-bpe/1"


@dataclass(frozen=True)
class BpeVocab:
    """Ordered merge rules plus the derived token byte strings."""

    merges: tuple[tuple[bytes, bytes], ...]
    provenance: str = ""
    token_bytes: tuple[bytes, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "merges", tuple(self.merges))
        toks = [bytes([i]) for i in range(256)]
        ids: dict[bytes, int] = {t: i for i, t in enumerate(toks)}
        for left, right in self.merges:
            if left not in ids or right not in ids:
                raise ValueError(f"merge ({left!r}, {right!r}) references unknown token")
            toks.append(left + right)
            ids[left + right] = len(toks) - 1
        object.__setattr__(self, "token_bytes", tuple(toks))

    @property
    def vocab_size(self) -> int:
        return 256 + len(self.merges)

    def merge_table(self) -> np.ndarray:
        """Rows of [left_id, right_id, new_id] in rank order, for the kernels."""
        ids = {t: i for i, t in enumerate(self.token_bytes)}
        rows = [
            (ids[left], ids[right], 256 + k)
            for k, (left, right) in enumerate(self.merges)
        ]
        if not rows:
            return np.zeros((0, 3), dtype=np.int32)
        return np.asarray(rows, dtype=np.int32)


def train_bpe(corpus: list[bytes], target_vocab: int, provenance: str = "") -> BpeVocab:
    """Greedy highest-frequency pair merging until `target_vocab` is reached.

    Stops early when no adjacent pair occurs at least twice. Ties on count
    are broken by the lexicographically smallest (left_bytes, right_bytes).
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    if target_vocab < 257:
        raise ValueError(f"target_vocab must be >= 257, got {target_vocab}")
    seqs = [np.frombuffer(doc, dtype=np.uint8).astype(np.int32) for doc in corpus]
    token_bytes = [bytes([i]) for i in range(256)]
    merges: list[tuple[bytes, bytes]] = []
    while len(token_bytes) < target_vocab:
        counts = count_pairs(seqs)
        if not counts:
            break
        top = max(counts.values())
        if top < 2:
            break
        a, b = min(
            (p for p, c in counts.items() if c == top),
            key=lambda p: (token_bytes[p[0]], token_bytes[p[1]]),
        )
        new_id = len(token_bytes)
        token_bytes.append(token_bytes[a] + token_bytes[b])
        merges.append((token_bytes[a], token_bytes[b]))
        seqs = [apply_merge(s, a, b, new_id) for s in seqs]
    return BpeVocab(merges=tuple(merges), provenance=provenance)


def encode(vocab: BpeVocab, text: bytes) -> list[int]:
    """Token ids for `text`; merge rules applied in rank order."""
    if not text:
        return []
    ids = np.frombuffer(text, dtype=np.uint8).astype(np.int32)
    return encode_ids(ids, vocab.merge_table()).tolist()


def decode(vocab: BpeVocab, tokens: list[int]) -> bytes:
    out = bytearray()
    for t in tokens:
        if not 0 <= t < vocab.vocab_size:
            raise ValueError(f"token id {t} out of range for vocab size {vocab.vocab_size}")
        out += vocab.token_bytes[t]
    return bytes(out)


def token_count(vocab: BpeVocab, text: bytes) -> int:
    return len(encode(vocab, text))


def mean_density(vocab: BpeVocab, docs: list[bytes]) -> float:
    """Corpus-level bytes per token, the tokenizer-bias measurement."""
    total_bytes = sum(len(d) for d in docs)
    total_tokens = sum(token_count(vocab, d) for d in docs)
    if total_tokens == 0:
        raise ValueError("no tokens produced; corpus is empty")
    return total_bytes / total_tokens


def save_vocab(vocab: BpeVocab, path: str) -> None:
    lines = [json.dumps({"format": VOCAB_FORMAT_TAG, "vocab_size": vocab.vocab_size})]
    for left, right in vocab.merges:
        lines.append(f"{left.hex()} {right.hex()}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_vocab(path: str) -> BpeVocab:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty vocabulary file")
    header = json.loads(lines[0])
    if not isinstance(header, dict) or header.get("format") != VOCAB_FORMAT_TAG:
        raise ValueError(f"{path}: bad vocabulary header")
    merges = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: line {i}: expected two hex fields")
        merges.append((bytes.fromhex(parts[0]), bytes.fromhex(parts[1])))
    vocab = BpeVocab(merges=tuple(merges))
    if vocab.vocab_size != header.get("vocab_size"):
        raise ValueError(
            f"{path}: header vocab_size {header.get('vocab_size')} != "
            f"{vocab.vocab_size} merges+256"
        )
    return vocab
