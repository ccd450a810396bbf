"""Synthetic sequence-transduction task standing in for a speech corpus.

Each real token owns a prototype feature vector. An utterance is a token
sequence drawn from a bigram grammar, rendered as a run of noisy prototype
frames per token, so the frame-to-token alignment is monotonic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist

from raed.config.schema import ToyTaskSpec
from raed.data.features import FeatureWriter
from raed.data.manifest import DatasetManifest, UtteranceRecord, write_manifest
from raed.data.vocab import Vocabulary
from raed.models.checkpoint import write_tensors
from raed.utils.concurrency import run_parallel
from raed.utils.errors import DataError
from raed.utils.logging import get_logger

log = get_logger(__name__)

PathLike = Union[str, Path]
SPLITS = ("train", "dev", "test")
# real token k has vocabulary id k + 2
_ID_SHIFT = 2


@dataclass
class ToyTask:
    spec: ToyTaskSpec
    vocab: Vocabulary
    prototypes: np.ndarray  # [V, F]
    start: np.ndarray  # [V]
    bigram: np.ndarray  # [V, V], rows stochastic

    def tensors(self) -> Dict[str, np.ndarray]:
        return {"prototypes": self.prototypes, "start": self.start, "bigram": self.bigram}


@dataclass
class RenderedUtterance:
    tokens: List[int]  # vocabulary ids
    features: np.ndarray
    frame_labels: np.ndarray  # vocabulary id per frame


@dataclass
class GenerationReport:
    out_dir: Path
    manifests: Dict[str, Path] = field(default_factory=dict)
    frame_accuracy: float = 0.0
    prototype_attempts: int = 1


def make_prototypes(spec: ToyTaskSpec, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    for attempt in range(1, spec.prototype_retries + 1):
        # rounded through float32 so stored features can tile them exactly
        protos = rng.normal(0.0, 1.0, size=(spec.vocab_size, spec.feature_dim)).astype(np.float32).astype(np.float64)
        closest = float(pdist(protos).min())
        if closest >= spec.min_prototype_distance:
            return protos, attempt
        log.debug("prototypes too close attempt=%d min_distance=%.3f", attempt, closest)
    raise DataError(
        f"prototypes closer than {spec.min_prototype_distance} after {spec.prototype_retries} attempts"
    )


def make_grammar(spec: ToyTaskSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Start distribution and bigram table; `_` (index 0) never starts a
    sequence and never follows itself."""
    alpha = np.full(spec.vocab_size, spec.grammar_concentration)
    start = rng.dirichlet(alpha)
    start[0] = 0.0
    bigram = rng.dirichlet(alpha, size=spec.vocab_size)
    bigram[0, 0] = 0.0
    return start / start.sum(), bigram / bigram.sum(axis=1, keepdims=True)


def sample_task(spec: ToyTaskSpec, rng: np.random.Generator) -> Tuple[ToyTask, int]:
    protos, attempts = make_prototypes(spec, rng)
    start, bigram = make_grammar(spec, rng)
    return ToyTask(spec, Vocabulary.toy(spec.vocab_size), protos, start, bigram), attempts


def sample_tokens(task: ToyTask, rng: np.random.Generator) -> List[int]:
    spec = task.spec
    length = int(rng.integers(spec.min_len, spec.max_len + 1))
    seq: List[int] = []
    for pos in range(length):
        probs = task.start if pos == 0 else task.bigram[seq[-1]]
        if pos == length - 1 and pos > 0:
            probs = probs.copy()
            probs[0] = 0.0
            probs = probs / probs.sum()
        seq.append(int(rng.choice(spec.vocab_size, p=probs)))
    return [t + _ID_SHIFT for t in seq]


def render(task: ToyTask, tokens: List[int], rng: np.random.Generator) -> RenderedUtterance:
    spec = task.spec
    durations = spec.frames_per_token + rng.integers(-spec.jitter, spec.jitter + 1, size=len(tokens))
    labels = np.repeat(np.asarray(tokens, dtype=np.int64), durations)
    feats = task.prototypes[labels - _ID_SHIFT]
    if spec.noise_sigma > 0:
        feats = feats + rng.normal(0.0, spec.noise_sigma, size=feats.shape)
    return RenderedUtterance(tokens, feats, labels)


def nearest_prototype_accuracy(task: ToyTask, utts: List[RenderedUtterance]) -> float:
    """Share of frames whose nearest prototype is the token that produced them."""
    feats = np.concatenate([u.features for u in utts])
    labels = np.concatenate([u.frame_labels for u in utts])
    guess = cdist(feats, task.prototypes).argmin(axis=1) + _ID_SHIFT
    return float(np.mean(guess == labels))


def _render_one(args: Tuple[ToyTask, np.random.SeedSequence]) -> RenderedUtterance:
    task, seed = args
    rng = np.random.default_rng(seed)
    tokens = sample_tokens(task, rng)
    return render(task, tokens, rng)


def generate_split(task: ToyTask, count: int, seed: np.random.SeedSequence, workers: int = 1) -> List[RenderedUtterance]:
    return run_parallel(_render_one, [(task, s) for s in seed.spawn(count)], workers)


def generate_dataset(spec: ToyTaskSpec, out_dir: PathLike) -> GenerationReport:
    if spec.min_len * (spec.frames_per_token - spec.jitter) < 4:
        raise DataError("shortest possible utterance has fewer than 4 frames")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    task_seed, *split_seeds = np.random.SeedSequence(spec.seed).spawn(1 + len(SPLITS))
    task, attempts = sample_task(spec, np.random.default_rng(task_seed))
    write_tensors(out / "task.raed", task.tensors())
    (out / "task.json").write_text(spec.model_dump_json(indent=2), encoding="utf-8")

    report = GenerationReport(out, prototype_attempts=attempts)
    sizes = {"train": spec.n_train, "dev": spec.n_dev, "test": spec.n_test}
    for split, seed in zip(SPLITS, split_seeds):
        utts = generate_split(task, sizes[split], seed, spec.workers)
        records = []
        with FeatureWriter(out / f"{split}.rafx", spec.feature_dim) as writer:
            for i, u in enumerate(utts):
                offset = writer.append(u.features)
                records.append(UtteranceRecord(utt_id=f"{split}-{i:05d}", offset=offset, frames=len(u.features), tokens=u.tokens))
        manifest = DatasetManifest(
            split=split,
            features=f"{split}.rafx",
            feature_dim=spec.feature_dim,
            vocab=task.vocab.tokens,
            utterances=records,
        )
        write_manifest(out / f"{split}.json", manifest)
        with (out / f"{split}.ref.txt").open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(f"{rec.utt_id} {task.vocab.to_text(rec.tokens)}\n")
        report.manifests[split] = out / f"{split}.json"
        if split == "test":
            report.frame_accuracy = nearest_prototype_accuracy(task, utts)
        log.info("split written split=%s utterances=%d", split, len(records))
    log.info("nearest-prototype frame accuracy=%.4f", report.frame_accuracy)
    return report
