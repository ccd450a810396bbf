from __future__ import annotations

import argparse
from pathlib import Path

from raed.cli.app import Router
from raed.config.schema import ExperimentConfig, RelaxationConfig, load_config, override
from raed.data.manifest import load_split
from raed.data.toy_task import generate_dataset
from raed.decoding.lm import load_lm, save_lm, train_toy_lm
from raed.decoding.runner import decode_corpus
from raed.decoding.writer import write_decodes, write_hypotheses
from raed.evaluation.entropy import compare_entropy
from raed.evaluation.report import (
    entropy_report_dict,
    format_entropy_report,
    format_score_report,
    score_report_dict,
    write_json,
)
from raed.evaluation.scoring import read_transcripts, score_corpus
from raed.experiments.grid import run_grid
from raed.models.checkpoint import load_checkpoint, read_tensors, write_tensors
from raed.models.registry import build_model
from raed.training.trainer import train
from raed.utils.errors import ConfigError, DataError, DecodingError, ShapeError, VocabularyError
from raed.utils.logging import get_logger

log = get_logger(__name__)

router = Router()


def _train_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    select_by = args.select_by.replace("-", "_") if args.select_by else None
    relaxation = config.relaxation
    if args.relax_gamma is not None or args.relax_learned:
        base = relaxation or RelaxationConfig()
        if args.relax_learned:
            if args.relax_gamma is not None and not 0.0 < args.relax_gamma < 1.0:
                raise ConfigError(
                    f"--relax-learned starts from --relax-gamma, which must lie in (0, 1), got {args.relax_gamma}"
                )
            # with --relax-learned, --relax-gamma sets the starting value
            relaxation = override(base, mode="learned", learned_init=args.relax_gamma)
        else:
            relaxation = override(base, gamma=args.relax_gamma)
    return config.model_copy(
        update={
            "relaxation": relaxation,
            "train": override(config.train, seed=args.seed, epochs=args.epochs, selection_metric=select_by),
            "model": override(config.model, arch=args.arch, seed=args.seed),
        }
    )


@router.command("gen-data")
def cmd_gen_data(args: argparse.Namespace) -> int:
    spec = override(load_config(args.spec).data, seed=args.seed, workers=args.workers)
    report = generate_dataset(spec, args.out)
    for split, path in report.manifests.items():
        print(f"{split}\t{path}")
    print(f"nearest-prototype frame accuracy\t{report.frame_accuracy:.4f}")
    return 0


@router.command("lm-train")
def cmd_lm_train(args: argparse.Namespace) -> int:
    utts, vocab, _ = load_split(args.manifest)
    config = override(load_config(args.config).lm, seed=args.seed)
    lm, report = train_toy_lm([u.tokens for u in utts], len(vocab), config)
    save_lm(args.out, lm)
    ppl = f"{report.heldout_perplexity[-1]:.4f}" if report.heldout_perplexity else "n/a"
    log.info("lm written path=%s heldout_ppl=%s", args.out, ppl)
    print(f"held-out perplexity\t{ppl}")
    return 0


@router.command("train")
def cmd_train(args: argparse.Namespace) -> int:
    config = _train_config(args)
    train_utts, vocab, manifest = load_split(args.train_manifest)
    dev_utts, dev_vocab, _ = load_split(args.dev_manifest)
    if dev_vocab.tokens != vocab.tokens:
        raise DataError("train and dev manifests use different vocabularies")
    model_config = config.resolve_model(len(vocab), manifest.feature_dim)
    lm = load_lm(args.lm, len(vocab)) if args.lm else None

    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(config.model_dump_json(indent=2), encoding="utf-8")
    result = train(
        build_model(model_config), model_config, config, run_dir, train_utts, dev_utts, vocab,
        lm=lm, resume=args.resume,
    )
    print(f"best checkpoint\t{result.best_checkpoint}\tepoch {result.state.best_epoch}")
    return 0


@router.command("decode")
def cmd_decode(args: argparse.Namespace) -> int:
    model, model_config = load_checkpoint(args.checkpoint)
    utts, vocab, manifest = load_split(args.manifest)
    if len(vocab) != model.vocab_size:
        raise VocabularyError(f"manifest vocabulary {len(vocab)} != model vocabulary {model.vocab_size}")
    if manifest.feature_dim != model_config.frontend.feature_dim:
        raise ShapeError(f"manifest feature dim {manifest.feature_dim} != model {model_config.frontend.feature_dim}")

    fusion = load_config(args.config).fusion
    if args.beam is not None and not 1 <= args.beam <= fusion.max_beam:
        raise DecodingError(f"beam {args.beam} outside [1, {fusion.max_beam}]")
    fusion = override(
        fusion,
        beam=args.beam,
        lm_weight=args.lm_weight,
        nbest=args.nbest,
        eos_factor=args.eos_factor,
        use_lm=False if args.no_lm else None,
        normalize_length=False if args.no_length_norm else None,
    )
    lm = None
    if fusion.use_lm and args.lm:
        lm = load_lm(args.lm, len(vocab))
    elif fusion.use_lm:
        log.info("no --lm given; decoding without fusion")

    outputs = decode_corpus(model, utts, vocab, lm, fusion, workers=args.workers, dump_attention=args.dump_attention)
    out = Path(args.out)
    results = [o.result for o in outputs]
    write_decodes(out / "decodes.jsonl", results)
    write_hypotheses(out / "hyp.txt", results)
    if args.dump_attention:
        write_tensors(out / "attention.raed", {k: v for o in outputs for k, v in o.attention.items()})
    log.info("decoded utterances=%d out=%s", len(results), out)
    return 0


@router.command("score")
def cmd_score(args: argparse.Namespace) -> int:
    report = score_corpus(read_transcripts(args.ref), read_transcripts(args.hyp))
    print(format_score_report(report, per_utterance=not args.summary_only))
    if args.json_out:
        write_json(args.json_out, score_report_dict(report))
    return 0


@router.command("analyze-attention")
def cmd_analyze_attention(args: argparse.Namespace) -> int:
    report = compare_entropy(read_tensors(args.baseline), read_tensors(args.relaxed))
    print(format_entropy_report(report))
    if args.json_out:
        write_json(args.json_out, entropy_report_dict(report))
    return 0


@router.command("grid")
def cmd_grid(args: argparse.Namespace) -> int:
    report = run_grid(load_config(args.config), args.data, args.lm, args.out, workers=args.workers)
    write_json(Path(args.out) / "grid.json", report.to_dict())
    print(report.format())
    return 0
