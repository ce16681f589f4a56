"""Comparison segmenters: byte-pair encoding with weighted document
sampling, plus the fixed-prior single-predictor model configuration.

The BPE here is deliberately plain: base vocabulary is the 256 bytes, merges
are picked greedily by pair frequency over the sampled training stream (ties
break toward the lower-id pair), and merges never cross document boundaries.
There is no pre-tokenization; whether merges may cross whitespace is simply a
consequence of the byte stream, which is the documented behaviour.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CorpusDoc, ScriptConfig
from .errors import AllZeroCountsError, CorpusTooSmallWarning, InvalidBetaError
from .model import ModelConfig

BASE_VOCAB = 256


@dataclass
class BpeModel:
    """Ordered merge list plus the byte string each id decodes to."""

    merges: list[tuple[int, int]] = field(default_factory=list)
    vocab: list[bytes] = field(default_factory=lambda: [bytes([i]) for i in range(BASE_VOCAB)])

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def encode(self, data: bytes) -> list[int]:
        """Apply merges in rank order, leftmost occurrence first."""
        ids = list(data)
        rank = {pair: i for i, pair in enumerate(self.merges)}
        while len(ids) >= 2:
            best_rank, best_pair = None, None
            for pair in zip(ids, ids[1:]):
                r = rank.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank, best_pair = r, pair
            if best_pair is None:
                break
            new_id = BASE_VOCAB + best_rank
            out = []
            i = 0
            while i < len(ids):
                if i < len(ids) - 1 and (ids[i], ids[i + 1]) == best_pair:
                    out.append(new_id)
                    i += 2
                else:
                    out.append(ids[i])
                    i += 1
            ids = out
        return ids

    def decode(self, ids: list[int]) -> bytes:
        return b"".join(self.vocab[i] for i in ids)

    def segment_text(self, text: str) -> list[int]:
        return self.encode(text.encode("utf-8"))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "merges": [list(p) for p in self.merges],
            "vocab": [list(entry) for entry in self.vocab],
        }
        path.write_text(json.dumps(payload))

    @classmethod
    def load(cls, path: str | Path) -> "BpeModel":
        payload = json.loads(Path(path).read_text())
        model = cls(
            merges=[tuple(p) for p in payload["merges"]],
            vocab=[bytes(entry) for entry in payload["vocab"]],
        )
        # the vocab must be reconstructible from the merges
        for i, (left, right) in enumerate(model.merges):
            expect = model.vocab[left] + model.vocab[right]
            if model.vocab[BASE_VOCAB + i] != expect:
                raise ValueError(f"merge {i} does not reproduce its vocab entry")
        return model


def alpha_sample_weights(counts: dict[str, int], alpha: float) -> dict[str, float]:
    """Exponent-tempered multinomial over languages: q_i = p_i^a / sum p_j^a
    with p_i the language's share of tokens. Languages with zero counts keep
    zero weight; alpha=0 is uniform over the non-empty ones."""
    if any(c < 0 for c in counts.values()):
        raise ValueError("negative counts")
    total = sum(counts.values())
    if total == 0:
        raise AllZeroCountsError("all language counts are zero")
    langs = [l for l, c in counts.items() if c > 0]
    p = np.array([counts[l] / total for l in langs], dtype=np.float64)
    q = p ** alpha
    q = q / q.sum()
    out = {l: 0.0 for l in counts}
    out.update({l: float(v) for l, v in zip(langs, q)})
    return out


def sample_training_stream(
    docs: list[CorpusDoc],
    weights: dict[str, float] | None,
    n_samples: int | None,
    seed: int,
) -> list[bytes]:
    """Draw documents with replacement, language first by weight, then a
    uniform document within the language. Without weights the corpus is used
    as-is (one pass, original order)."""
    if weights is None:
        return [d.text.encode("utf-8") for d in docs]
    by_lang: dict[str, list[CorpusDoc]] = {}
    for d in docs:
        by_lang.setdefault(d.lang, []).append(d)
    langs = [l for l in sorted(weights) if weights[l] > 0 and l in by_lang]
    if not langs:
        raise AllZeroCountsError("no sampleable language")
    probs = np.array([weights[l] for l in langs])
    probs = probs / probs.sum()
    rng = np.random.default_rng([seed, 2027])
    n = n_samples if n_samples is not None else len(docs)
    stream = []
    for _ in range(n):
        lang = langs[rng.choice(len(langs), p=probs)]
        pool = by_lang[lang]
        stream.append(pool[rng.integers(len(pool))].text.encode("utf-8"))
    return stream


def bpe_train(
    docs: list[CorpusDoc],
    target_vocab: int,
    weights: dict[str, float] | None = None,
    seed: int = 0,
    n_samples: int | None = None,
) -> BpeModel:
    """Greedy highest-frequency pair merging until the vocabulary reaches
    ``target_vocab``. Ties break toward (lower left id, lower right id).
    Stops early with a warning when no pair occurs at least twice."""
    if target_vocab < BASE_VOCAB:
        raise ValueError(f"target vocab {target_vocab} below the byte base {BASE_VOCAB}")
    stream = [list(doc) for doc in sample_training_stream(docs, weights, n_samples, seed)]
    model = BpeModel()
    while model.vocab_size < target_vocab:
        counts: dict[tuple[int, int], int] = {}
        for ids in stream:
            for pair in zip(ids, ids[1:]):
                counts[pair] = counts.get(pair, 0) + 1
        best = None
        for pair, c in counts.items():
            if c < 2:
                continue
            if best is None or (-c, pair) < (-best[1], best[0]):
                best = (pair, c)
        if best is None:
            warnings.warn(
                f"no pair occurs twice; stopping at vocab {model.vocab_size} "
                f"short of {target_vocab}", CorpusTooSmallWarning)
            break
        pair = best[0]
        new_id = BASE_VOCAB + len(model.merges)
        model.merges.append(pair)
        model.vocab.append(model.vocab[pair[0]] + model.vocab[pair[1]])
        for d, ids in enumerate(stream):
            out = []
            i = 0
            while i < len(ids):
                if i < len(ids) - 1 and (ids[i], ids[i + 1]) == pair:
                    out.append(new_id)
                    i += 2
                else:
                    out.append(ids[i])
                    i += 1
            stream[d] = out
    return model


def dtp_config(beta: float, base: ModelConfig | None = None) -> ModelConfig:
    """Fixed-prior configuration: one boundary predictor shared by every
    script with prior ``beta``, architecture otherwise identical to ``base``."""
    if not 0.0 < beta <= 1.0:
        raise InvalidBetaError(f"beta {beta} outside (0, 1]")
    src = base if base is not None else ModelConfig()
    cfg = ModelConfig.from_dict(src.to_dict())
    cfg.mode = "dtp"
    cfg.scripts = [ScriptConfig(sc.script, beta, sc.anchor_language) for sc in cfg.scripts]
    return cfg
