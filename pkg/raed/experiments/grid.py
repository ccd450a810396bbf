"""Seeds x relaxation-coefficient sweep: train, decode with and without the
LM, score, and compare attention entropy against the unrelaxed model."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from raed.config.schema import ExperimentConfig, RelaxationConfig, override
from raed.data.manifest import load_split
from raed.decoding.lm import load_lm
from raed.decoding.runner import decode_corpus
from raed.decoding.writer import write_decodes, write_hypotheses
from raed.evaluation.entropy import compare_entropy
from raed.evaluation.report import format_table
from raed.evaluation.scoring import score_corpus
from raed.models.checkpoint import load_checkpoint, write_tensors
from raed.models.registry import build_model
from raed.training.trainer import train
from raed.utils.errors import ConfigError
from raed.utils.logging import get_logger

log = get_logger(__name__)

PathLike = Union[str, Path]


@dataclass
class GridCell:
    seed: int
    gamma: float
    run_dir: Path
    wer: Dict[str, float] = field(default_factory=dict)  # keyed "lm" / "no_lm"
    cer: Dict[str, float] = field(default_factory=dict)
    entropy_ratio: Optional[float] = None


@dataclass
class GridReport:
    cells: List[GridCell] = field(default_factory=list)

    def rows(self) -> List[Dict[str, Any]]:
        """Per (gamma, LM) averages over seeds."""
        out = []
        for gamma in sorted({c.gamma for c in self.cells}):
            cells = [c for c in self.cells if c.gamma == gamma]
            ratios = [c.entropy_ratio for c in cells if c.entropy_ratio is not None]
            for tag in ("no_lm", "lm"):
                out.append(
                    {
                        "gamma": gamma,
                        "lm": tag == "lm",
                        "seeds": len(cells),
                        "wer_mean": float(np.mean([c.wer[tag] for c in cells])),
                        "wer_std": float(np.std([c.wer[tag] for c in cells])),
                        "cer_mean": float(np.mean([c.cer[tag] for c in cells])),
                        "entropy_ratio": float(np.mean(ratios)) if ratios else None,
                    }
                )
        return out

    def format(self) -> str:
        table = []
        for r in self.rows():
            approach = "baseline" if r["gamma"] == 0.0 else f"relaxed gamma={r['gamma']:g}"
            ratio = "n/a" if r["entropy_ratio"] is None else f"{100.0 * r['entropy_ratio']:+.2f}"
            table.append(
                [approach, "yes" if r["lm"] else "no", f"{100.0 * r['wer_mean']:.2f} +- {100.0 * r['wer_std']:.2f}",
                 f"{100.0 * r['cer_mean']:.2f}", ratio]
            )
        return format_table(["approach", "LM", "WER%", "CER%", "entropy d%"], table)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cells": [
                {"seed": c.seed, "gamma": c.gamma, "run_dir": str(c.run_dir), "wer": c.wer, "cer": c.cer,
                 "entropy_ratio": c.entropy_ratio}
                for c in self.cells
            ],
            "summary": self.rows(),
        }


def _cell_config(config: ExperimentConfig, seed: int, gamma: float) -> ExperimentConfig:
    relaxation = None
    if gamma > 0.0:
        relaxation = override(config.relaxation or RelaxationConfig(), gamma=gamma)
    return config.model_copy(
        update={
            "relaxation": relaxation,
            "train": override(config.train, seed=seed),
            "model": override(config.model, seed=seed),
        }
    )


def run_grid(
    config: ExperimentConfig,
    data_dir: PathLike,
    lm_path: PathLike,
    out_dir: PathLike,
    workers: int = 1,
) -> GridReport:
    if not config.grid.seeds or not config.grid.gammas:
        raise ConfigError("grid.seeds and grid.gammas must not be empty")
    data = Path(data_dir)
    out = Path(out_dir)
    train_utts, vocab, manifest = load_split(data / "train.json")
    dev_utts, _, _ = load_split(data / "dev.json")
    test_utts, _, _ = load_split(data / "test.json")
    refs = {u.utt_id: vocab.to_text(u.tokens) for u in test_utts}
    lm = load_lm(lm_path, len(vocab))

    report = GridReport()
    for seed in config.grid.seeds:
        baseline_dump = None
        # unrelaxed first so every relaxed cell has its entropy reference
        for gamma in sorted(set(config.grid.gammas)):
            cell_config = _cell_config(config, seed, gamma)
            model_config = cell_config.resolve_model(len(vocab), manifest.feature_dim)
            cell = GridCell(seed, gamma, out / f"seed{seed}_gamma{gamma:g}")
            log.info("grid cell seed=%d gamma=%g run_dir=%s", seed, gamma, cell.run_dir)
            result = train(build_model(model_config), model_config, cell_config, cell.run_dir, train_utts, dev_utts, vocab)
            model, _ = load_checkpoint(result.best_checkpoint)

            for tag, use_lm in (("no_lm", False), ("lm", True)):
                fusion = override(cell_config.fusion, use_lm=use_lm)
                outputs = decode_corpus(
                    model, test_utts, vocab, lm if use_lm else None, fusion,
                    workers=workers, dump_attention=not use_lm,
                )
                results = [o.result for o in outputs]
                write_decodes(cell.run_dir / f"decode_{tag}" / "decodes.jsonl", results)
                write_hypotheses(cell.run_dir / f"decode_{tag}" / "hyp.txt", results)
                scores = score_corpus(refs, {r.utt_id: r.text for r in results})
                cell.wer[tag], cell.cer[tag] = scores.wer, scores.cer
                if not use_lm:
                    dump = {k: v for o in outputs for k, v in o.attention.items()}
                    write_tensors(cell.run_dir / "attention.raed", dump)
                    if gamma == 0.0:
                        baseline_dump = dump
                    if baseline_dump is not None:
                        cell.entropy_ratio = compare_entropy(baseline_dump, dump).ratio
            log.info(
                "grid cell done seed=%d gamma=%g wer=%.4f wer_lm=%.4f entropy_ratio=%s",
                seed, gamma, cell.wer["no_lm"], cell.wer["lm"], cell.entropy_ratio,
            )
            report.cells.append(cell)
    return report
