"""Boundary prediction layer: per-script predictors, relaxed Bernoulli
sampling with straight-through hardening, the binomial count objective,
and segment bookkeeping.

Positions are byte positions; the routing tag at row position 0 is handled
by the model, not here. Hard boundaries close segments: a position with a
hard 1 is the last byte of its segment, and trailing non-boundary positions
form one final segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .corpus import ScriptConfig, script_of_tag
from .errors import BinomialDomainError, InvalidTauError, UnknownScriptError
from .scripts import ScriptId

PROB_FLOOR = 1e-6


class BoundaryPredictor:
    """Two-layer MLP (width -> width -> 1) emitting boundary probabilities."""

    def __init__(self, name: str, width: int, beta: float, rng: np.random.Generator,
                 dtype=np.float32, init_scale: float = 0.02):
        self.name = name
        self.beta = beta
        self.w1 = Tensor(rng.normal(0.0, init_scale, (width, width)).astype(dtype), requires_grad=True)
        self.b1 = Tensor(np.zeros(width, dtype=dtype), requires_grad=True)
        self.w2 = Tensor(rng.normal(0.0, init_scale, (width, 1)).astype(dtype), requires_grad=True)
        self.b2 = Tensor(np.zeros(1, dtype=dtype), requires_grad=True)

    def named_params(self) -> dict[str, Tensor]:
        return {
            f"pred.{self.name}.w1": self.w1,
            f"pred.{self.name}.b1": self.b1,
            f"pred.{self.name}.w2": self.w2,
            f"pred.{self.name}.b2": self.b2,
        }

    def logits(self, hidden: Tensor) -> Tensor:
        h = ag.gelu(ag.linear(hidden, self.w1, self.b1))
        out = ag.linear(h, self.w2, self.b2)
        return ag.reshape(out, (-1,))

    def probs(self, hidden: Tensor) -> Tensor:
        return ag.sigmoid(self.logits(hidden))


class PredictorBank:
    """Routes script tags to boundary predictors.

    One predictor per script in the adaptive configuration; a single shared
    predictor (with one prior for every script) in the fixed-prior one.
    """

    def __init__(self, scripts: list[ScriptConfig], width: int, rng: np.random.Generator,
                 shared: bool = False, dtype=np.float32, script_names: list[str] | None = None):
        self.scripts = list(scripts)
        self.shared = shared
        self._by_script: dict[ScriptId, tuple[BoundaryPredictor, float]] = {}
        if shared:
            beta = scripts[0].beta
            pred = BoundaryPredictor("all", width, beta, rng, dtype)
            self.predictors = [pred]
            for sc in scripts:
                self._by_script[sc.script] = (pred, beta)
        else:
            self.predictors = []
            for sc in scripts:
                name = script_names[sc.script] if script_names else str(sc.script)
                pred = BoundaryPredictor(name, width, sc.beta, rng, dtype)
                self.predictors.append(pred)
                self._by_script[sc.script] = (pred, sc.beta)

    def route(self, tag: int) -> tuple[BoundaryPredictor, float]:
        """Predictor and prior for a script tag id."""
        script = script_of_tag(tag, max(self._by_script) + 1)
        if script not in self._by_script:
            raise UnknownScriptError(f"tag {tag} has no configured boundary predictor")
        return self._by_script[script]

    def by_script(self, script: ScriptId) -> tuple[BoundaryPredictor, float]:
        if script not in self._by_script:
            raise UnknownScriptError(f"script {script} has no configured boundary predictor")
        return self._by_script[script]

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for pred in self.predictors:
            out.update(pred.named_params())
        return out

    def layout(self) -> dict:
        """Structural summary: predictor count and script -> (slot, prior)."""
        slot = {id(p): i for i, p in enumerate(self.predictors)}
        return {
            "n_predictors": len(self.predictors),
            "routing": {s: (slot[id(p)], beta) for s, (p, beta) in self._by_script.items()},
        }


def predict_boundary_probs(bank: PredictorBank, hidden: Tensor, script: ScriptId) -> Tensor:
    """Per-position boundary probabilities from the predictor routed by script."""
    pred, _ = bank.by_script(script)
    return pred.probs(hidden)


@dataclass
class BoundaryMask:
    """Boundary decisions for the byte positions of one row."""

    probs: np.ndarray       # predictor output in (0, 1)
    relaxed: Tensor         # noisy relaxation, still differentiable
    hard: Tensor            # 0/1 with straight-through backward
    u: np.ndarray | None    # the uniform noise draw, kept for reproducibility

    @property
    def hard_values(self) -> np.ndarray:
        return self.hard.values

    @property
    def k(self) -> int:
        return int(self.hard.values.sum())


def gumbel_sigmoid(probs: Tensor, u: np.ndarray, tau: float) -> tuple[Tensor, Tensor]:
    """Relaxed Bernoulli sample of boundary decisions.

    relaxed = sigmoid((logit(p) + logit(u)) / tau) with u ~ Uniform(0,1);
    hard thresholds the relaxation at 0.5 (ties count as boundaries) and
    backpropagates straight through to the relaxed value. Probabilities are
    clamped away from {0, 1} before the logit.
    """
    if tau <= 0:
        raise InvalidTauError(f"tau {tau} must be positive")
    u = np.clip(np.asarray(u, dtype=probs.values.dtype), PROB_FLOOR, 1.0 - PROB_FLOOR)
    p = ag.clamp(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    logit_p = ag.add(ag.log(p), ag.mul(ag.log(ag.add(ag.mul(p, -1.0), 1.0)), -1.0))
    noise = np.log(u) - np.log1p(-u)
    relaxed = ag.sigmoid(ag.mul(ag.add(logit_p, Tensor(noise)), 1.0 / tau))
    hard = ag.straight_through(relaxed, 0.5)
    return relaxed, hard


def deterministic_boundaries(probs: Tensor) -> tuple[Tensor, Tensor]:
    """Noise-free boundaries for analysis: threshold the raw probabilities."""
    p = ag.clamp(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    hard = ag.straight_through(p, 0.5)
    return p, hard


def binomial_regularizer(k, n: int, beta: float):
    """Negative log binomial likelihood of k boundaries among n positions.

    ``k`` may be a graph scalar (the sum of relaxed boundary values, which
    keeps the objective differentiable) or a plain number for reporting.
    Computed in log space via log-gamma. Returns a Tensor scalar.
    """
    k_t = k if isinstance(k, Tensor) else Tensor(np.asarray(float(k), dtype=np.float64))
    k_val = float(k_t.values)
    if n < 0 or k_val < 0 or k_val > n:
        raise BinomialDomainError(f"k={k_val} outside [0, {n}]")
    if not 0.0 < beta <= 1.0:
        raise BinomialDomainError(f"beta {beta} outside (0, 1]")
    if beta == 1.0:
        if k_val != n:
            raise BinomialDomainError("beta=1 requires every position to be a boundary")
        return Tensor(np.asarray(0.0, dtype=k_t.values.dtype))
    log_choose_const = math.lgamma(n + 1)
    lg_k = ag.lgamma(ag.add(k_t, 1.0))
    lg_nk = ag.lgamma(ag.add(ag.mul(k_t, -1.0), float(n + 1)))
    count_terms = ag.add(ag.mul(k_t, math.log(beta) - math.log1p(-beta)), n * math.log1p(-beta))
    log_pmf = ag.add(ag.add(ag.mul(ag.add(lg_k, lg_nk), -1.0), count_terms), log_choose_const)
    return ag.mul(log_pmf, -1.0)


@dataclass
class SegmentIndex:
    """Non-decreasing segment id per position plus the segment count."""

    ids: np.ndarray
    m: int


def segment_index(hard: np.ndarray) -> SegmentIndex:
    """Segment ids from hard boundaries: a boundary closes its segment, and
    any trailing non-boundary positions form one final segment."""
    hard = np.asarray(hard)
    if hard.ndim != 1 or len(hard) == 0:
        raise ValueError("hard mask must be a non-empty vector")
    b = (hard >= 0.5).astype(np.int64)
    ids = np.cumsum(b) - b  # boundaries strictly before each position
    return SegmentIndex(ids=ids, m=int(ids[-1]) + 1)


def segment_pool(hidden: Tensor, seg: SegmentIndex) -> Tensor:
    """Mean of hidden rows within each segment."""
    return ag.segment_mean_pool(hidden, seg.ids, seg.m)
