"""Command-line interface: gen-data, train, analyze, bench.

Settings come from a JSON config file merged over per-command defaults;
``--set dotted.path=value`` flags override individual fields. Every JSON
output embeds the fully-resolved config (and seed) so any run can be
reproduced from its own artifacts. Exit codes: 0 success, 1 usage error,
2 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    BpeSegmenter,
    ByteSegmenter,
    ModelSegmenter,
    SegmentationReport,
    analyze,
    bench,
)
from .bpe import BpeModel, dtp_config
from .corpus import (
    MAGNET_PRESETS,
    ScriptConfig,
    byte_to_word_ratio,
    gen_synthetic_parallel,
    load_corpus,
    save_corpus,
)
from .errors import ScriptPoolError
from .model import Model, ModelConfig
from .scripts import DEFAULT_REGISTRY
from .training import TrainConfig, Trainer


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are 1
        raise _UsageError(message)


GEN_DEFAULTS = {
    "out": "corpus.jsonl",
    "seed": 0,
    "n_sentences": 200,
    "words_per_sentence": 6,
    "scripts": ["latin", "cyrillic", "indic"],
    "bytes_per_word": {"latin": 4, "cyrillic": 10, "indic": 18},
}

TRAIN_DEFAULTS = {
    "corpus": "corpus.jsonl",
    "out": "run",
    "mode": "magnet",
    "seed": 0,
    "priors": dict(MAGNET_PRESETS["5_10_20"]),
    "beta": 0.2,  # dtp prior
    "model": {
        "width": 64, "ffn_width": 256, "heads": 4,
        "layers_first": 2, "layers_middle": 2, "layers_last": 2,
        "max_len": 128, "tau": 0.5, "reg_weight": 1.0,
    },
    "train": {
        "steps": 500, "batch_size": 8, "lr": 5e-5, "warmup_ratio": 0.1,
        "adam_beta1": 0.9, "adam_beta2": 0.98, "adam_eps": 1e-6,
    },
}

ANALYZE_DEFAULTS = {
    "segmenter": "byte",  # "byte", a .json merge table, or a checkpoint
    "corpus": "corpus.jsonl",
    "out": "analysis",
    "anchor": None,
}

BENCH_DEFAULTS = {
    "checkpoint": "run/checkpoint.bin",
    "corpus": "corpus.jsonl",
    "out": "bench",
    "warmup": 2,
    "repeats": 3,
}


def _set_dotted(cfg: dict, path: str, raw: str) -> None:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def resolve_config(defaults: dict, config_path: str | None, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(defaults)
    if config_path:
        loaded = json.loads(Path(config_path).read_text())
        for k, v in loaded.items():
            if isinstance(v, dict) and isinstance(cfg.get(k), dict):
                cfg[k].update(v)
            else:
                cfg[k] = v
    for item in overrides:
        if "=" not in item:
            raise _UsageError(f"--set takes dotted.path=value, got {item!r}")
        path, raw = item.split("=", 1)
        _set_dotted(cfg, path, raw)
    return cfg


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))


def _write_csv(path: Path, rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        csv.writer(fh).writerows(rows)


# -- commands ---------------------------------------------------------------

def cmd_gen_data(cfg: dict) -> int:
    scripts = [DEFAULT_REGISTRY.id_of(s) for s in cfg["scripts"]]
    bpw = {DEFAULT_REGISTRY.id_of(k): v for k, v in cfg["bytes_per_word"].items()
           if DEFAULT_REGISTRY.id_of(k) in scripts}
    docs = gen_synthetic_parallel(cfg["n_sentences"], cfg["words_per_sentence"], bpw, cfg["seed"])
    out = Path(cfg["out"])
    save_corpus(docs, out)
    ratios = {}
    for s in scripts:
        sdocs = [d for d in docs if d.script == s]
        ratios[DEFAULT_REGISTRY.name_of(s)] = byte_to_word_ratio(sdocs)
    _write_json(out.with_suffix(out.suffix + ".run.json"),
                {"config": cfg, "seed": cfg["seed"], "docs": len(docs), "ratios": ratios})
    print(f"wrote {len(docs)} docs to {out}; byte/word ratios: "
          + ", ".join(f"{k}={v:.2f}" for k, v in ratios.items()))
    return 0


def build_model_config(cfg: dict) -> ModelConfig:
    mode = cfg["mode"]
    mcfg = ModelConfig(mode="magnet" if mode == "dtp" else mode,
                       scripts=[], seed=cfg["seed"], **cfg["model"])
    if mode == "magnet":
        mcfg.scripts = [
            ScriptConfig(DEFAULT_REGISTRY.id_of(name), beta, name)
            for name, beta in sorted(cfg["priors"].items(), key=lambda kv: DEFAULT_REGISTRY.id_of(kv[0]))
        ]
    if mode == "dtp":
        mcfg = dtp_config(cfg["beta"], mcfg)
    return mcfg


def cmd_train(cfg: dict) -> int:
    docs = load_corpus(cfg["corpus"])
    mcfg = build_model_config(cfg)
    model = Model(mcfg)
    tcfg = TrainConfig(seed=cfg["seed"], **cfg["train"])
    out = Path(cfg["out"])
    trainer = Trainer(model, docs, tcfg)
    trainer.run(out / "loss_log.csv")
    model.save(out / "checkpoint.bin")
    summary = {"config": cfg, "seed": cfg["seed"], **trainer.summary()}
    _write_json(out / "summary.json", summary)
    print(f"trained {tcfg.steps} steps; final ce {summary['final_ce']:.4f}; "
          f"artifacts in {out}")
    return 0


def load_segmenter(spec: str):
    if spec == "byte":
        return ByteSegmenter()
    path = Path(spec)
    if path.suffix == ".json":
        return BpeSegmenter(BpeModel.load(path))
    return ModelSegmenter(Model.load(path))


def cmd_analyze(cfg: dict) -> int:
    docs = load_corpus(cfg["corpus"])
    segmenter = load_segmenter(cfg["segmenter"])
    report = analyze(segmenter, docs, cfg.get("anchor"))
    out = Path(cfg["out"])
    _write_csv(out / "report.csv", report.to_csv_rows())
    _write_json(out / "report.json", {
        "config": cfg,
        "seed": cfg.get("seed", 0),
        "segmenter": report.segmenter,
        "anchor_lang": report.anchor_lang,
        "rows": report.rows,
    })
    for r in report.rows:
        print(f"{r['segmenter']:10s} {r['lang']:10s} tokens={r['mean_tokens']:8.2f} "
              f"bytes={r['mean_bytes']:8.2f} parity={r['parity']:.3f}")
    return 0


def cmd_bench(cfg: dict) -> int:
    docs = load_corpus(cfg["corpus"])
    model = Model.load(cfg["checkpoint"])
    rows = bench(model, docs, warmup=cfg["warmup"], repeats=cfg["repeats"])
    out = Path(cfg["out"])
    header = ["lang", "mean_s", "std_s", "rel_time", "flops_middle", "flops_middle_byte", "flops_ratio"]
    _write_csv(out / "bench.csv", [header] + [[getattr(r, h) for h in header] for r in rows])
    _write_json(out / "bench.json", {
        "config": cfg,
        "seed": cfg.get("seed", 0),
        "rows": [{h: getattr(r, h) for h in header} for r in rows],
    })
    for r in rows:
        print(f"{r.lang:10s} {r.mean_s * 1e3:8.2f} ms/sentence  rel={r.rel_time:.3f}  "
              f"middle-flops ratio={r.flops_ratio:.3f}")
    return 0


COMMANDS = {
    "gen-data": (GEN_DEFAULTS, cmd_gen_data),
    "train": (TRAIN_DEFAULTS, cmd_train),
    "analyze": (ANALYZE_DEFAULTS, cmd_analyze),
    "bench": (BENCH_DEFAULTS, cmd_bench),
}


def main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="scriptpool",
                     description="byte-level language modeling with script-routed segmentation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                       help="override a config field by dotted path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        if name == "gen-data":
            p.add_argument("--scripts", default=None, help="comma-separated script subset")
        if name == "train":
            p.add_argument("--mode", choices=["magnet", "dtp", "byte"], default=None)
            p.add_argument("--corpus", default=None)
        if name == "analyze":
            p.add_argument("--segmenter", default=None)
            p.add_argument("--corpus", default=None)
            p.add_argument("--anchor", default=None)
        if name == "bench":
            p.add_argument("--checkpoint", default=None)
            p.add_argument("--corpus", default=None)

    try:
        args = parser.parse_args(argv)
        defaults, runner = COMMANDS[args.command]
        cfg = resolve_config(defaults, args.config, args.set)
        for key in ("seed", "out", "mode", "corpus", "segmenter", "anchor", "checkpoint"):
            val = getattr(args, key, None)
            if val is not None:
                cfg[key] = val
        if args.command == "gen-data" and args.scripts is not None:
            names = [s.strip() for s in args.scripts.split(",") if s.strip()]
            cfg["scripts"] = names
        return runner(cfg)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ScriptPoolError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
