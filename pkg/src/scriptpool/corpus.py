"""Corpus handling: byte/script ingestion, compression priors, batching,
and synthetic parallel-corpus generation.

Vocabulary layout: ids 0..255 are raw bytes, 256..255+S are script tags
(one per configured script, in registry order), and the id after the last
tag is PAD. Every serialized row starts with its script tag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import (
    EmptyCorpusError,
    InvalidRatioError,
    ScriptMismatchError,
    UnknownScriptError,
    UnrealizableLengthError,
    ZeroWordsError,
)
from .scripts import CYRILLIC, DEFAULT_REGISTRY, INDIC, LATIN, ScriptId, ScriptRegistry, detect_script

BYTE_VOCAB = 256


def tag_id(script: ScriptId) -> int:
    return BYTE_VOCAB + script


def script_of_tag(tag: int, n_scripts: int) -> ScriptId:
    if not BYTE_VOCAB <= tag < BYTE_VOCAB + n_scripts:
        raise UnknownScriptError(f"id {tag} is not a configured script tag")
    return tag - BYTE_VOCAB


def pad_id(n_scripts: int) -> int:
    return BYTE_VOCAB + n_scripts


def vocab_size(n_scripts: int) -> int:
    return BYTE_VOCAB + n_scripts + 1


@dataclass
class ScriptConfig:
    """Per-script compression prior and its anchor language label."""

    script: ScriptId
    beta: float
    anchor_language: str = ""

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise InvalidRatioError(f"beta {self.beta} outside (0, 1]")


@dataclass
class CorpusDoc:
    text: str
    lang: str
    script: ScriptId

    @classmethod
    def from_text(cls, text: str, lang: str, registry: ScriptRegistry = DEFAULT_REGISTRY,
                  declared_script: ScriptId | None = None) -> "CorpusDoc":
        detected = detect_script(text, registry)
        if declared_script is not None and declared_script != detected:
            raise ScriptMismatchError(
                f"declared {registry.name_of(declared_script)} but detected {registry.name_of(detected)}"
            )
        return cls(text=text, lang=lang, script=detected)


@dataclass
class ByteSequence:
    """A single-script UTF-8 byte sequence plus its routing tag."""

    byte_ids: np.ndarray  # int array of values in [0, 255]
    script: ScriptId
    tag: int

    @classmethod
    def from_text(cls, text: str, registry: ScriptRegistry = DEFAULT_REGISTRY) -> "ByteSequence":
        script = detect_script(text, registry)
        raw = np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int32)
        return cls(byte_ids=raw, script=script, tag=tag_id(script))

    def to_row(self) -> np.ndarray:
        """Serialize for the model: tag at position 0, bytes after."""
        return np.concatenate([[self.tag], self.byte_ids]).astype(np.int32)

    def __len__(self) -> int:
        return len(self.byte_ids)


# -- ratios and priors ---------------------------------------------------------

def count_words(text: str) -> int:
    """Whitespace-delimited word count (any Unicode whitespace, runs collapse)."""
    return len(text.split())


def byte_to_word_ratio(docs: list[CorpusDoc]) -> float:
    """Mean over documents of UTF-8 byte length divided by word count."""
    if not docs:
        raise EmptyCorpusError("no documents")
    total = 0.0
    for doc in docs:
        words = count_words(doc.text)
        if words == 0:
            raise ZeroWordsError(f"document {doc.text[:40]!r} has no words")
        total += len(doc.text.encode("utf-8")) / words
    return total / len(docs)


def derive_prior(ratio: float) -> float:
    """Boundary prior from a byte-to-word ratio: 1/ratio, clamped to (0, 1]."""
    if ratio < 1.0:
        raise InvalidRatioError(f"ratio {ratio} < 1")
    return min(1.0, 1.0 / ratio)


# Published prior combinations, keyed by the compression multipliers they
# target. DTP variants use one prior for every script.
MAGNET_PRESETS = {
    "5_10_20": {LATIN: 0.2, CYRILLIC: 0.10, INDIC: 0.05},
    "5_10_15": {LATIN: 0.2, CYRILLIC: 0.10, INDIC: 0.066},
    "5_10_13": {LATIN: 0.2, CYRILLIC: 0.10, INDIC: 0.076},
    "3_6_12": {LATIN: 0.33, CYRILLIC: 0.17, INDIC: 0.083},
    "1_2_4": {LATIN: 1.0, CYRILLIC: 0.5, INDIC: 0.25},
}
DTP_PRESETS = {"5x": 0.2, "10x": 0.1}


# -- synthetic parallel corpus ---------------------------------------------------

# Letter inventories used to compose pseudo-words. Byte widths in UTF-8:
# Latin 1, Cyrillic 2, Telugu 3.
_CONSONANTS = {
    LATIN: "bdgklmnprstvz",
    CYRILLIC: "бдгклмнпрствз",
    INDIC: "కగతదనపబమరలవసహ",
}
_VOWELS = {
    LATIN: "aeiou",
    CYRILLIC: "аеиоу",
    INDIC: "అఇఉఎఒ",
}
_CP_WIDTH = {LATIN: 1, CYRILLIC: 2, INDIC: 3}
_WORD_POOL = 32


def _compose_word(rng: np.random.Generator, script: ScriptId, n_letters: int) -> str:
    cons, vows = _CONSONANTS[script], _VOWELS[script]
    letters = []
    for i in range(n_letters):
        pool = cons if i % 2 == 0 else vows
        letters.append(pool[rng.integers(len(pool))])
    return "".join(letters)


def _word_pool(seed: int, script: ScriptId, bytes_per_word: int) -> list[str]:
    width = _CP_WIDTH[script]
    if bytes_per_word < 1 or bytes_per_word % width != 0:
        raise UnrealizableLengthError(
            f"{bytes_per_word} bytes not composable from {width}-byte codepoints "
            f"of script {DEFAULT_REGISTRY.name_of(script)}"
        )
    n_letters = bytes_per_word // width
    rng = np.random.default_rng([seed, 7919, script])
    return [_compose_word(rng, script, n_letters) for _ in range(_WORD_POOL)]


def gen_synthetic_parallel(
    n_sentences: int,
    words_per_sentence: int,
    bytes_per_word: dict[ScriptId, int],
    seed: int,
    registry: ScriptRegistry = DEFAULT_REGISTRY,
) -> list[CorpusDoc]:
    """Sentence-parallel corpus across scripts with controlled word sizes.

    Sentence i has the same word count (and the same pseudo-word indices) in
    every script; per-script word byte-lengths are fixed by ``bytes_per_word``,
    so the byte-to-word ratio of each script's half is roughly its word size
    plus one separator byte. Deterministic given the seed.
    """
    pools = {s: _word_pool(seed, s, b) for s, b in bytes_per_word.items()}
    idx_rng = np.random.default_rng([seed, 104729])
    docs: list[CorpusDoc] = []
    for _ in range(n_sentences):
        word_idx = idx_rng.integers(_WORD_POOL, size=words_per_sentence)
        for script in bytes_per_word:
            text = " ".join(pools[script][i] for i in word_idx)
            docs.append(CorpusDoc(text=text, lang=registry.name_of(script), script=script))
    return docs


# -- batch construction -----------------------------------------------------------

@dataclass
class Batch:
    """Fixed-width token matrix of single-script rows (tag at column 0)."""

    tokens: np.ndarray      # (batch, 1 + max_len) int32
    scripts: np.ndarray     # (batch,) script id per row
    lengths: np.ndarray     # (batch,) tag + payload length per row
    pad_mask: np.ndarray    # (batch, 1 + max_len) True where padding

    def row(self, i: int) -> np.ndarray:
        return self.tokens[i, : self.lengths[i]]


def _split_utf8(data: bytes, chunk: int) -> list[bytes]:
    """Split bytes into chunks of at most ``chunk``, never mid-codepoint."""
    out = []
    pos = 0
    while pos < len(data):
        end = min(pos + chunk, len(data))
        while end < len(data) and (data[end] & 0xC0) == 0x80:
            end -= 1
            if end == pos:
                raise ValueError(f"cannot split without breaking a codepoint at chunk size {chunk}")
        out.append(data[pos:end])
        pos = end
    return out


def pack_rows(docs: list[CorpusDoc], max_len: int) -> list[tuple[ScriptId, np.ndarray]]:
    """Concatenate docs per script and cut into rows of at most ``max_len``
    payload bytes (rows are tag + payload, so one longer than the cap)."""
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    if not docs:
        raise EmptyCorpusError("no documents to pack")
    streams: dict[ScriptId, bytearray] = {}
    for doc in docs:
        streams.setdefault(doc.script, bytearray()).extend(doc.text.encode("utf-8"))
    rows = []
    for script in sorted(streams):
        for chunk in _split_utf8(bytes(streams[script]), max_len):
            payload = np.frombuffer(chunk, dtype=np.uint8).astype(np.int32)
            row = np.concatenate([[tag_id(script)], payload]).astype(np.int32)
            rows.append((script, row))
    return rows


def make_batches(
    docs: list[CorpusDoc],
    max_len: int,
    batch_size: int,
    seed: int,
    n_scripts: int | None = None,
) -> Iterator[Batch]:
    """One deterministic shuffled pass over the packed rows."""
    rows = pack_rows(docs, max_len)
    if n_scripts is None:
        n_scripts = len(DEFAULT_REGISTRY)
    pad = pad_id(n_scripts)
    order = np.random.default_rng([seed, 31337]).permutation(len(rows))
    width = max_len + 1
    for start in range(0, len(rows), batch_size):
        chunk = [rows[i] for i in order[start:start + batch_size]]
        tokens = np.full((len(chunk), width), pad, dtype=np.int32)
        scripts = np.empty(len(chunk), dtype=np.int32)
        lengths = np.empty(len(chunk), dtype=np.int32)
        for i, (script, row) in enumerate(chunk):
            tokens[i, : len(row)] = row
            scripts[i] = script
            lengths[i] = len(row)
        pad_mask = tokens == pad
        yield Batch(tokens=tokens, scripts=scripts, lengths=lengths, pad_mask=pad_mask)


# -- JSONL corpus files ------------------------------------------------------------

def save_corpus(docs: list[CorpusDoc], path: str | Path,
                registry: ScriptRegistry = DEFAULT_REGISTRY) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for doc in docs:
            rec = {"text": doc.text, "lang": doc.lang, "script": registry.name_of(doc.script)}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_corpus(path: str | Path, registry: ScriptRegistry = DEFAULT_REGISTRY) -> list[CorpusDoc]:
    """Read a JSONL corpus; declared scripts are checked against detection."""
    docs = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            declared = registry.id_of(rec["script"]) if "script" in rec else None
            docs.append(CorpusDoc.from_text(rec["text"], rec.get("lang", ""), registry, declared))
    if not docs:
        raise EmptyCorpusError(f"{path} holds no documents")
    return docs
