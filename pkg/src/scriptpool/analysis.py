"""Segmentation-equity analysis and efficiency benchmarks.

Token counts per sentence come from three segmenter families: raw UTF-8
bytes, a trained pair-merge vocabulary, and model boundary predictors (read
noise-free at analysis time: a position is a boundary iff its predicted
probability reaches 0.5). Parity is a language's mean token count divided by
the anchor language's; equitable segmentation puts every parity near 1.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bpe import BpeModel
from .corpus import CorpusDoc, ByteSequence, tag_id
from .errors import NonParallelCorpusError
from .model import Model, ModelConfig
from .scripts import DEFAULT_REGISTRY, LATIN


class ByteSegmenter:
    name = "byte"

    def count(self, text: str) -> int:
        return len(text.encode("utf-8"))


class BpeSegmenter:
    def __init__(self, model: BpeModel):
        self.model = model
        self.name = f"bpe{model.vocab_size}"

    def count(self, text: str) -> int:
        return len(self.model.segment_text(text))


class ModelSegmenter:
    """Counts a sentence's segments from a noise-free forward pass."""

    def __init__(self, model: Model, name: str | None = None):
        self.model = model
        self.name = name or model.config.mode

    def count(self, text: str) -> int:
        seq = ByteSequence.from_text(text)
        trace = self.model.forward_row(seq.to_row(), analysis=True)
        return trace.m

    def pooled_len(self, text: str) -> int:
        seq = ByteSequence.from_text(text)
        trace = self.model.forward_row(seq.to_row(), analysis=True)
        return trace.pooled_len


def segment_count(segmenter, text: str) -> int:
    """Token count of a single-script sentence under the given segmenter."""
    return segmenter.count(text)


@dataclass
class SegmentationReport:
    segmenter: str
    anchor_lang: str
    rows: list[dict] = field(default_factory=list)

    def parity(self, lang: str) -> float:
        for r in self.rows:
            if r["lang"] == lang:
                return r["parity"]
        raise KeyError(lang)

    def to_csv_rows(self) -> list[list]:
        header = ["segmenter", "lang", "script", "mean_tokens", "mean_bytes", "parity"]
        out = [header]
        for r in self.rows:
            out.append([r[k] for k in header])
        return out


def group_parallel(docs: list[CorpusDoc]) -> dict[str, list[CorpusDoc]]:
    """Group docs by language and require equal sentence counts."""
    by_lang: dict[str, list[CorpusDoc]] = {}
    for d in docs:
        by_lang.setdefault(d.lang, []).append(d)
    sizes = {lang: len(ds) for lang, ds in by_lang.items()}
    if len(set(sizes.values())) > 1:
        raise NonParallelCorpusError(f"sentence counts differ across languages: {sizes}")
    return by_lang


def default_anchor(by_lang: dict[str, list[CorpusDoc]]) -> str:
    latin = sorted(l for l, ds in by_lang.items() if ds[0].script == LATIN)
    if latin:
        return latin[0]
    return sorted(by_lang)[0]


def analyze(segmenter, docs: list[CorpusDoc], anchor_lang: str | None = None) -> SegmentationReport:
    """Mean tokens/bytes per sentence per language, with parity against the
    anchor language (the Latin one unless overridden)."""
    by_lang = group_parallel(docs)
    anchor = anchor_lang if anchor_lang is not None else default_anchor(by_lang)
    if anchor not in by_lang:
        raise KeyError(f"anchor language {anchor!r} not in corpus")
    means = {}
    for lang, ds in sorted(by_lang.items()):
        tokens = [segment_count(segmenter, d.text) for d in ds]
        nbytes = [len(d.text.encode("utf-8")) for d in ds]
        means[lang] = (float(np.mean(tokens)), float(np.mean(nbytes)), ds[0].script)
    report = SegmentationReport(segmenter=getattr(segmenter, "name", "?"), anchor_lang=anchor)
    anchor_tokens = means[anchor][0]
    for lang, (mt, mb, script) in sorted(means.items()):
        report.rows.append({
            "segmenter": report.segmenter,
            "lang": lang,
            "script": DEFAULT_REGISTRY.name_of(script),
            "mean_tokens": mt,
            "mean_bytes": mb,
            "parity": mt / anchor_tokens,
        })
    return report


# -- compute estimates ------------------------------------------------------------

def transformer_layer_flops(seq_len: int, width: int, ffn_width: int) -> float:
    """Rough multiply-add count for one layer: projections, attention
    score/apply, and the feed-forward."""
    proj = 8 * seq_len * width * width          # q,k,v,o projections
    attn = 4 * seq_len * seq_len * width        # scores + weighted sum
    ffn = 4 * seq_len * width * ffn_width
    return float(proj + attn + ffn)


def middle_block_flops(seq_len: int, config: ModelConfig) -> float:
    return config.layers_middle * transformer_layer_flops(seq_len, config.width, config.ffn_width)


def middle_flops_for_sentence(model: Model, text: str) -> float:
    seg = ModelSegmenter(model)
    return middle_block_flops(seg.pooled_len(text), model.config)


def byte_middle_flops_for_sentence(config: ModelConfig, text: str) -> float:
    # byte-level baseline keeps one middle position per input position
    n = len(text.encode("utf-8")) + 1
    return middle_block_flops(n, config)


# -- wall-clock benchmark -----------------------------------------------------------

@dataclass
class BenchRow:
    lang: str
    mean_s: float
    std_s: float
    rel_time: float
    flops_middle: float
    flops_middle_byte: float
    flops_ratio: float


def bench(model: Model, docs: list[CorpusDoc], warmup: int = 2, repeats: int = 3) -> list[BenchRow]:
    """Per-language mean wall-clock per sentence for the compressing model,
    relative to the byte-mode forward of the same weights on the same
    machine, plus machine-independent middle-block compute estimates."""
    by_lang = group_parallel(docs)
    is_byte = model.config.mode == "byte"
    if is_byte:
        byte_model = model  # the baseline itself: relative time 1 by construction
    else:
        byte_cfg = ModelConfig.from_dict(model.config.to_dict())
        byte_cfg.mode = "byte"
        byte_model = Model(byte_cfg, dtype=model.dtype)
        for name, tensor in byte_model.params.items():
            if name in model.params:
                tensor.values = model.params[name].values.copy()

    def time_once(m: Model, ds: list[CorpusDoc]) -> float:
        t0 = time.perf_counter()
        for d in ds:
            seq = ByteSequence.from_text(d.text)
            m.forward_row(seq.to_row(), analysis=(m.config.mode != "byte"))
        return (time.perf_counter() - t0) / len(ds)

    rows = []
    for lang, ds in sorted(by_lang.items()):
        for _ in range(warmup):
            time_once(model, ds)
            time_once(byte_model, ds)
        ours = [time_once(model, ds) for _ in range(repeats)]
        base = ours if is_byte else [time_once(byte_model, ds) for _ in range(repeats)]
        if is_byte:
            flops = float(np.mean([byte_middle_flops_for_sentence(model.config, d.text) for d in ds]))
        else:
            flops = float(np.mean([middle_flops_for_sentence(model, d.text) for d in ds]))
        flops_byte = float(np.mean([byte_middle_flops_for_sentence(model.config, d.text) for d in ds]))
        rows.append(BenchRow(
            lang=lang,
            mean_s=float(np.mean(ours)),
            std_s=float(np.std(ours)),
            rel_time=1.0 if is_byte else float(np.mean(ours) / np.mean(base)),
            flops_middle=flops,
            flops_middle_byte=flops_byte,
            flops_ratio=flops / flops_byte,
        ))
    return rows
