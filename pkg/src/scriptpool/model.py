"""Three-block byte model: causal byte encoder, pooled middle block over
predicted segments, and an upsampled decoder, with per-script boundary
routing.

Rows are ``[script tag, byte0, byte1, ...]``. The tag position is routing
metadata: it is excluded from boundary prediction and from the boundary
count objective, and it always closes its own singleton segment so the
pooled sequence is ``[tag segment, byte segments...]``. Upsampling hands
position t the pooled vector of the last segment that closed strictly
before t (a learned null vector before any segment has closed), which keeps
next-byte prediction causal: no position ever sees the summary of its own
still-open segment.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import NEG_INF, Tensor
from .boundaries import (
    BoundaryMask,
    PredictorBank,
    SegmentIndex,
    binomial_regularizer,
    deterministic_boundaries,
    gumbel_sigmoid,
    segment_index,
)
from .corpus import BYTE_VOCAB, ScriptConfig, vocab_size
from .errors import SequenceTooLongError, ShapeMismatchError
from .scripts import DEFAULT_REGISTRY
from .boundaries import segment_pool

MODES = ("magnet", "dtp", "byte")

_CHECKPOINT_MAGIC = b"SPOOLCK1"


@dataclass
class ModelConfig:
    """Architecture and objective settings.

    The stock shape mirrors the published pretraining setup (2/10/2 layers,
    width 768); ``tiny()`` is the desk-scale preset used throughout the
    tests.
    """

    width: int = 768
    ffn_width: int = 3072
    heads: int = 12
    layers_first: int = 2
    layers_middle: int = 10
    layers_last: int = 2
    max_len: int = 512
    tau: float = 0.5
    reg_weight: float = 1.0
    mode: str = "magnet"
    scripts: list[ScriptConfig] = field(default_factory=list)
    n_script_slots: int = 0  # tag slots in the vocabulary; registry size by default
    seed: int = 0

    def __post_init__(self):
        if self.width % self.heads != 0:
            raise ValueError(f"width {self.width} not divisible by heads {self.heads}")
        if self.mode not in MODES:
            raise ValueError(f"mode {self.mode!r} not one of {MODES}")
        if not self.scripts:
            self.scripts = [ScriptConfig(i, 0.2, DEFAULT_REGISTRY.name_of(i))
                            for i in range(len(DEFAULT_REGISTRY))]
        if self.n_script_slots == 0:
            self.n_script_slots = max(len(DEFAULT_REGISTRY),
                                      max(sc.script for sc in self.scripts) + 1)

    @classmethod
    def tiny(cls, **overrides) -> "ModelConfig":
        base = dict(width=64, ffn_width=256, heads=4, layers_first=2,
                    layers_middle=2, layers_last=2, max_len=128)
        base.update(overrides)
        return cls(**base)

    @property
    def vocab_size(self) -> int:
        return vocab_size(self.n_script_slots)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scripts"] = [asdict(sc) for sc in self.scripts]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["scripts"] = [ScriptConfig(**sc) for sc in d.get("scripts", [])]
        return cls(**d)


@dataclass
class ForwardTrace:
    """Everything one forward pass produces besides gradients."""

    logits: Tensor                     # (row length, vocab)
    boundary: BoundaryMask | None      # None in byte mode
    segments: SegmentIndex             # byte-position segments
    m: int                             # byte segment count
    pooled_len: int                    # middle-block length (m + tag segment)
    script: int


@dataclass
class RowLoss:
    total: Tensor
    ce: Tensor
    reg: Tensor
    n_bytes: int


def _layer_names(block: str, i: int) -> dict[str, str]:
    base = f"{block}.{i}"
    names = {}
    for p in ("wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo",
              "ln1g", "ln1b", "ln2g", "ln2b", "w1", "b1", "w2", "b2"):
        names[p] = f"{base}.{p}"
    return names


class Model:
    """Parameter container plus the forward/loss computation."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}
        self._mask_cache: dict[int, np.ndarray] = {}
        self._init_params()

    # -- parameters ---------------------------------------------------------

    def _param(self, name: str, values: np.ndarray) -> Tensor:
        t = Tensor(values.astype(self.dtype), requires_grad=True)
        self.params[name] = t
        return t

    def _init_params(self) -> None:
        cfg = self.config
        # Core weights and boundary predictors come from separate seeded
        # streams so byte/dtp/magnet variants of the same seed share every
        # non-predictor weight.
        rng = np.random.default_rng([cfg.seed, 0])
        scale = 0.02
        w, f, v = cfg.width, cfg.ffn_width, cfg.vocab_size
        self._param("embed.tok", rng.normal(0, scale, (v, w)))
        self._param("embed.pos", rng.normal(0, scale, (cfg.max_len + 1, w)))
        self._param("embed.segpos", rng.normal(0, scale, (cfg.max_len + 1, w)))
        for block, n in (("enc", cfg.layers_first), ("mid", cfg.layers_middle), ("dec", cfg.layers_last)):
            for i in range(n):
                names = _layer_names(block, i)
                for key in ("wq", "wk", "wv", "wo"):
                    self._param(names[key], rng.normal(0, scale, (w, w)))
                for key in ("bq", "bk", "bv", "bo"):
                    self._param(names[key], np.zeros(w))
                self._param(names["ln1g"], np.ones(w))
                self._param(names["ln1b"], np.zeros(w))
                self._param(names["ln2g"], np.ones(w))
                self._param(names["ln2b"], np.zeros(w))
                self._param(names["w1"], rng.normal(0, scale, (w, f)))
                self._param(names["b1"], np.zeros(f))
                self._param(names["w2"], rng.normal(0, scale, (f, w)))
                self._param(names["b2"], np.zeros(w))
        self._param("unembed.w", rng.normal(0, scale, (w, v)))
        self._param("unembed.b", np.zeros(v))
        self._param("null", rng.normal(0, scale, (1, w)))

        if cfg.mode == "byte":
            self.bank = None
        else:
            rng_pred = np.random.default_rng([cfg.seed, 1])
            self.bank = PredictorBank(
                cfg.scripts, w, rng_pred, shared=(cfg.mode == "dtp"),
                dtype=self.dtype, script_names=DEFAULT_REGISTRY.names,
            )
            self.params.update(self.bank.named_params())

    def param_count(self) -> int:
        return sum(t.values.size for t in self.params.values())

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.grad = None

    # -- building blocks -------------------------------------------------------

    def _causal_mask(self, n: int) -> np.ndarray:
        if n not in self._mask_cache:
            mask = np.triu(np.full((n, n), NEG_INF, dtype=self.dtype), k=1)
            self._mask_cache[n] = mask
        return self._mask_cache[n]

    def _attention(self, x: Tensor, names: dict[str, str]) -> Tensor:
        cfg = self.config
        p = self.params
        n = x.values.shape[0]
        dh = cfg.width // cfg.heads
        q = ag.linear(x, p[names["wq"]], p[names["bq"]])
        k = ag.linear(x, p[names["wk"]], p[names["bk"]])
        v = ag.linear(x, p[names["wv"]], p[names["bv"]])
        mask = self._causal_mask(n)
        outs = []
        for h in range(cfg.heads):
            qh = ag.take_cols(q, h * dh, (h + 1) * dh)
            kh = ag.take_cols(k, h * dh, (h + 1) * dh)
            vh = ag.take_cols(v, h * dh, (h + 1) * dh)
            scores = ag.mul(ag.matmul(qh, ag.transpose(kh)), 1.0 / np.sqrt(dh))
            attn = ag.softmax_masked(scores, mask)
            outs.append(ag.matmul(attn, vh))
        merged = outs[0] if len(outs) == 1 else ag.concat_cols(outs)
        return ag.linear(merged, p[names["wo"]], p[names["bo"]])

    def _ffn(self, x: Tensor, names: dict[str, str]) -> Tensor:
        p = self.params
        h = ag.gelu(ag.linear(x, p[names["w1"]], p[names["b1"]]))
        return ag.linear(h, p[names["w2"]], p[names["b2"]])

    def _block(self, x: Tensor, block: str, n_layers: int) -> Tensor:
        # post-norm residual layers
        p = self.params
        for i in range(n_layers):
            names = _layer_names(block, i)
            x = ag.layer_norm(ag.add(x, self._attention(x, names)), p[names["ln1g"]], p[names["ln1b"]])
            x = ag.layer_norm(ag.add(x, self._ffn(x, names)), p[names["ln2g"]], p[names["ln2b"]])
        return x

    # -- model surface ------------------------------------------------------------

    def encode(self, row: np.ndarray) -> Tensor:
        """Causal byte encoder over a full row (tag included)."""
        cfg = self.config
        n = len(row)
        if n > cfg.max_len + 1:
            raise SequenceTooLongError(f"row of {n} exceeds max_len {cfg.max_len} (+tag)")
        x = ag.add(ag.embedding(self.params["embed.tok"], row),
                   ag.take_rows(self.params["embed.pos"], np.arange(n)))
        return self._block(x, "enc", cfg.layers_first)

    def upsample(self, middle_out: Tensor, seg: SegmentIndex, skip: Tensor) -> Tensor:
        """Duplicate pooled vectors back to positions, shifted by one segment.

        Position t receives the pooled vector of the last segment closed
        strictly before t plus the skip connection; positions before the
        first closed segment get the learned null vector.
        """
        if middle_out.values.shape[0] != seg.m:
            raise ShapeMismatchError("one middle row per segment required")
        if skip.values.shape[0] != len(seg.ids):
            raise ShapeMismatchError("skip must cover every position")
        idx = seg.ids - 1
        idx = np.where(idx < 0, seg.m, idx)  # null vector lives at row m
        stacked = ag.concat_rows([middle_out, self.params["null"]])
        return ag.add(ag.take_rows(stacked, idx), skip)

    def forward_row(
        self,
        row: np.ndarray,
        u: np.ndarray | None = None,
        analysis: bool = False,
        force_all_boundaries: bool = False,
    ) -> ForwardTrace:
        """Full pipeline for one row: encode, route, segment, pool, decode.

        Training passes supply ``u`` (one uniform draw per byte position);
        ``analysis=True`` thresholds raw probabilities noise-free instead.
        """
        cfg = self.config
        row = np.asarray(row)
        n = len(row)
        if n < 2:
            raise ValueError("row needs a tag and at least one byte")
        if row[0] < BYTE_VOCAB:
            raise ValueError("row must start with a script tag")
        script = int(row[0]) - BYTE_VOCAB
        n_bytes = n - 1

        h_enc = self.encode(row)

        boundary = None
        if cfg.mode == "byte" or force_all_boundaries:
            hard_np = np.ones(n_bytes, dtype=self.dtype)
        else:
            pred, _beta = self.bank.route(int(row[0]))
            byte_hidden = ag.take_rows(h_enc, np.arange(1, n))
            probs = pred.probs(byte_hidden)
            if analysis:
                relaxed, hard = deterministic_boundaries(probs)
                u_used = None
            else:
                if u is None:
                    raise ValueError("training forward needs a noise draw u")
                relaxed, hard = gumbel_sigmoid(probs, u, cfg.tau)
                u_used = np.asarray(u)
            boundary = BoundaryMask(probs=probs.values.copy(), relaxed=relaxed, hard=hard, u=u_used)
            hard_np = hard.values

        seg_bytes = segment_index(hard_np)
        # Tag closes its own singleton segment 0; byte segments follow.
        full_ids = np.concatenate([[0], seg_bytes.ids + 1])
        full_seg = SegmentIndex(ids=full_ids, m=seg_bytes.m + 1)

        pooled = segment_pool(h_enc, full_seg)
        pooled = ag.add(pooled, ag.take_rows(self.params["embed.segpos"], np.arange(full_seg.m)))
        h_mid = self._block(pooled, "mid", cfg.layers_middle)
        states = self.upsample(h_mid, full_seg, h_enc)
        h_dec = self._block(states, "dec", cfg.layers_last)
        logits = ag.linear(h_dec, self.params["unembed.w"], self.params["unembed.b"])

        return ForwardTrace(logits=logits, boundary=boundary, segments=seg_bytes,
                            m=seg_bytes.m, pooled_len=full_seg.m, script=script)

    def loss_row(self, trace: ForwardTrace, row: np.ndarray, beta: float) -> RowLoss:
        """Mean next-byte cross-entropy over byte positions plus the weighted
        boundary-count objective. The tag position is masked out of the CE."""
        cfg = self.config
        row = np.asarray(row)
        n = len(row)
        n_bytes = n - 1
        ce_vec = ag.cross_entropy(ag.take_rows(trace.logits, np.arange(n - 1)), row[1:])
        weights = np.ones(n - 1, dtype=self.dtype)
        weights[0] = 0.0  # the tag's own prediction does not count
        n_valid = n - 2
        if n_valid > 0:
            ce = ag.mul(ag.tsum(ag.mul(ce_vec, Tensor(weights))), 1.0 / n_valid)
        else:
            ce = Tensor(np.asarray(0.0, dtype=self.dtype))
        if trace.boundary is None:
            reg = Tensor(np.asarray(0.0, dtype=self.dtype))
            total = ce
        else:
            k_soft = ag.tsum(trace.boundary.relaxed)
            reg = binomial_regularizer(k_soft, n_bytes, beta)
            total = ag.add(ce, ag.mul(reg, cfg.reg_weight))
        return RowLoss(total=total, ce=ce, reg=reg, n_bytes=n_bytes)

    def beta_for_script(self, script: int) -> float:
        if self.bank is None:
            return 1.0
        _, beta = self.bank.by_script(script)
        return beta

    # -- checkpointing -----------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Single-file checkpoint: JSON header plus raw row-major tensors."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        names = sorted(self.params)
        header = {
            "format": 1,
            "config": self.config.to_dict(),
            "dtype": np.dtype(self.dtype).name,
            "tensors": [
                {"name": n, "dtype": self.params[n].values.dtype.name,
                 "shape": list(self.params[n].values.shape)}
                for n in names
            ],
        }
        blob = json.dumps(header).encode("utf-8")
        with path.open("wb") as fh:
            fh.write(_CHECKPOINT_MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for n in names:
                arr = self.params[n].values
                fh.write(np.ascontiguousarray(arr, dtype=np.dtype(arr.dtype).newbyteorder("<")).tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "Model":
        path = Path(path)
        with path.open("rb") as fh:
            magic = fh.read(8)
            if magic != _CHECKPOINT_MAGIC:
                raise ValueError(f"{path} is not a model checkpoint")
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            config = ModelConfig.from_dict(header["config"])
            model = cls(config, dtype=np.dtype(header["dtype"]).type)
            for spec in header["tensors"]:
                dt = np.dtype(spec["dtype"]).newbyteorder("<")
                n_items = int(np.prod(spec["shape"])) if spec["shape"] else 1
                raw = fh.read(n_items * dt.itemsize)
                arr = np.frombuffer(raw, dtype=dt).astype(spec["dtype"]).reshape(spec["shape"])
                if spec["name"] not in model.params:
                    raise ValueError(f"unexpected tensor {spec['name']} in checkpoint")
                if model.params[spec["name"]].values.shape != arr.shape:
                    raise ShapeMismatchError(f"tensor {spec['name']} shape mismatch")
                model.params[spec["name"]].values = arr.copy()
        return model
