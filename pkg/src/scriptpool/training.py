"""Optimization: Adam with linear warmup, the training loop, and the
predictor-only compression harness.

The loop is deterministic given (config, seed): batch order, noise draws and
parameter updates all come from seeded streams, so two runs with the same
inputs produce bit-identical loss logs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .boundaries import BoundaryPredictor, binomial_regularizer, gumbel_sigmoid
from .corpus import CorpusDoc, pack_rows
from .errors import NonFiniteGradientError, NonFiniteLossError, NonFiniteValueError
from .model import Model, ModelConfig
from .scripts import DEFAULT_REGISTRY


def warmup_lr(step: int, total_steps: int, base_lr: float, warmup_ratio: float) -> float:
    """Linear warmup to ``base_lr`` over the first ``warmup_ratio`` of
    training, constant afterwards. ``step`` is 0-based."""
    warmup_steps = max(1, int(round(warmup_ratio * total_steps)))
    return base_lr * min(1.0, (step + 1) / warmup_steps)


class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: int = 0


def adam_step(
    params: dict[str, Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.98,
    eps: float = 1e-6,
) -> None:
    """One bias-corrected Adam update in place.

    Parameters whose gradient is None are left untouched (their moments do
    not advance either), which keeps script-routing isolation exact across
    steps. Raises on non-finite gradients or updates.
    """
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"gradient of {name} is not finite")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.values)
            state.v[name] = np.zeros_like(p.values)
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = state.m[name] / (1 - beta1 ** t)
        v_hat = state.v[name] / (1 - beta2 ** t)
        p.values = p.values - lr * m_hat / (np.sqrt(v_hat) + eps)
        if not np.all(np.isfinite(p.values)):
            raise NonFiniteGradientError(f"parameter {name} became non-finite")


@dataclass
class TrainConfig:
    steps: int = 500
    batch_size: int = 8
    lr: float = 5e-5
    warmup_ratio: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-6
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepLog:
    step: int
    ce: float
    reg: float
    rates: dict[str, float] = field(default_factory=dict)


class Trainer:
    """Steps a model over packed single-script rows and logs per-step
    cross-entropy, count-objective value and boundary rates."""

    def __init__(self, model: Model, docs: list[CorpusDoc], cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.rows = pack_rows(docs, model.config.max_len)
        if not self.rows:
            raise ValueError("no rows to train on")
        self.state = AdamState()
        self._noise_rng = np.random.default_rng([cfg.seed, 555])
        self._order_rng = np.random.default_rng([cfg.seed, 777])
        self.logs: list[StepLog] = []

    def rate_columns(self) -> list[str]:
        if self.model.config.mode == "dtp":
            return ["boundary_rate_all"]
        names = {DEFAULT_REGISTRY.name_of(s) for s, _ in self.rows}
        return [f"boundary_rate_{n}" for n in sorted(names)]

    def _batches(self):
        bs = self.cfg.batch_size
        while True:
            order = self._order_rng.permutation(len(self.rows))
            for start in range(0, len(order) - bs + 1, bs):
                yield [self.rows[i] for i in order[start:start + bs]]

    def _step(self, step: int, batch) -> StepLog:
        model = self.model
        model.zero_grads()
        losses, ces, regs = [], [], []
        rate_acc: dict[str, list[float]] = {}
        try:
            for script, row in batch:
                n_bytes = len(row) - 1
                if model.config.mode == "byte":
                    trace = model.forward_row(row)
                    rate = 1.0
                else:
                    u = self._noise_rng.random(n_bytes)
                    trace = model.forward_row(row, u=u)
                    rate = trace.boundary.k / n_bytes
                beta = model.beta_for_script(script)
                loss = model.loss_row(trace, row, beta)
                losses.append(loss.total)
                ces.append(float(loss.ce.values))
                regs.append(float(loss.reg.values))
                key = ("boundary_rate_all" if model.config.mode == "dtp"
                       else f"boundary_rate_{DEFAULT_REGISTRY.name_of(script)}")
                rate_acc.setdefault(key, []).append(rate)
            total = losses[0]
            for extra in losses[1:]:
                total = ag.add(total, extra)
            total = ag.mul(total, 1.0 / len(losses))
            if not np.isfinite(total.values):
                raise NonFiniteLossError(step)
            total.backward()
        except NonFiniteValueError as exc:
            raise NonFiniteLossError(step, f"step {step}: {exc}") from exc
        lr = warmup_lr(step, self.cfg.steps, self.cfg.lr, self.cfg.warmup_ratio)
        adam_step(model.params, self.state, lr,
                  self.cfg.adam_beta1, self.cfg.adam_beta2, self.cfg.adam_eps)
        rates = {k: float(np.mean(v)) for k, v in rate_acc.items()}
        return StepLog(step=step, ce=float(np.mean(ces)), reg=float(np.mean(regs)), rates=rates)

    def run(self, log_path: str | Path | None = None) -> list[StepLog]:
        batches = self._batches()
        writer = None
        fh = None
        columns = ["step", "ce_loss", "reg_loss"] + self.rate_columns()
        if log_path is not None:
            log_path = Path(log_path)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            fh = log_path.open("w", newline="")
            writer = csv.writer(fh)
            writer.writerow(columns)
        try:
            for step in range(self.cfg.steps):
                log = self._step(step, next(batches))
                self.logs.append(log)
                if writer is not None:
                    rate_cells = [repr(log.rates[c]) if c in log.rates else ""
                                  for c in columns[3:]]
                    writer.writerow([log.step, repr(log.ce), repr(log.reg)] + rate_cells)
        finally:
            if fh is not None:
                fh.close()
        return self.logs

    def summary(self) -> dict:
        tail = self.logs[-min(20, len(self.logs)):]
        rates: dict[str, list[float]] = {}
        for log in tail:
            for k, v in log.rates.items():
                rates.setdefault(k, []).append(v)
        return {
            "steps": len(self.logs),
            "param_count": self.model.param_count(),
            "final_ce": float(np.mean([l.ce for l in tail])) if tail else None,
            "final_reg": float(np.mean([l.reg for l in tail])) if tail else None,
            "final_rates": {k: float(np.mean(v)) for k, v in rates.items()},
        }


def regularizer_only_rate(
    beta: float,
    steps: int = 2000,
    width: int = 64,
    n_positions: int = 512,
    tau: float = 0.1,
    lr: float = 1e-2,
    seed: int = 0,
    tail: int = 500,
) -> float:
    """Train a lone boundary predictor on random states under the count
    objective only; return the mean sampled hard boundary rate over the last
    ``tail`` steps.

    The default temperature here is deliberately low: the count objective
    sees the sum of relaxed values, whose expectation only tracks the
    underlying probabilities when the relaxation is close to the Bernoulli
    it stands in for. The learning rate decays linearly to a tenth so the
    tail average sits at the equilibrium instead of wandering around it.
    """
    rng = np.random.default_rng(seed)
    pred = BoundaryPredictor("probe", width, beta, rng)
    params = pred.named_params()
    state = AdamState()
    rates = []
    for step in range(steps):
        h = Tensor(rng.normal(0.0, 1.0, (n_positions, width)).astype(np.float32))
        probs = pred.probs(h)
        u = rng.random(n_positions)
        relaxed, hard = gumbel_sigmoid(probs, u, tau)
        loss = binomial_regularizer(ag.tsum(relaxed), n_positions, beta)
        for p in params.values():
            p.grad = None
        loss.backward()
        adam_step(params, state, lr * (1.0 - 0.9 * step / steps))
        rates.append(float(hard.values.mean()))
    return float(np.mean(rates[-tail:]))
