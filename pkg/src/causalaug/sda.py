"""Select Data Augmentation (SDA).

1. Split the training-domain samples into train/validation, stratified by domain.
2. For every candidate augmentation and every seed, train a domain
   classifier (labels are the domain indices) with that single augmentation
   applied to the training part, and record its accuracy on the
   un-augmented validation part.
3. Pick the candidate with the lowest mean domain accuracy, plus every
   candidate whose mean is within the minimum's standard error.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .augment import Augmentation, Rotation, spec_label
from .datasets import DomainDataset
from .errors import InsufficientDomainsError, InvalidSpecError
from .models import Mlp, TrainConfig, evaluate, train_erm
from .rng import derive_rng, derive_seed, make_rng, spawn_seed

_SPLIT_KEY = 0x5D1  # keeps split streams apart from training streams


@dataclass
class SdaConfig:
    candidates: list[Augmentation]
    seeds: int = 5
    split_fraction: float = 0.8
    classifier: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.1, epochs=10, batch_size=64))
    hidden: int = 256
    workers: int = 1

    def __post_init__(self):
        if not self.candidates:
            raise InvalidSpecError("SDA needs at least one candidate augmentation")
        if self.seeds < 2:
            raise InvalidSpecError("SDA needs >= 2 seeds to estimate a standard error")
        if not 0.0 < self.split_fraction < 1.0:
            raise InvalidSpecError("split_fraction must lie in (0, 1)")


@dataclass
class CandidateStats:
    label: str
    spec: Augmentation
    accuracies: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def standard_error(self) -> float:
        return standard_error(self.accuracies)


@dataclass
class SdaResult:
    candidates: list[CandidateStats]
    selected: list[int]

    @property
    def selected_labels(self) -> list[str]:
        return [self.candidates[i].label for i in self.selected]

    def by_name(self, name: str) -> CandidateStats:
        for c in self.candidates:
            if c.spec.name == name:
                return c
        raise KeyError(name)

    def rows(self) -> list[dict]:
        return [
            {
                "candidate": c.label,
                "mean": c.mean,
                "standard_error": c.standard_error,
                "selected": i in self.selected,
            }
            for i, c in enumerate(self.candidates)
        ]

    def to_dict(self) -> dict:
        return {
            "candidates": [
                {**row, "spec": c.spec.to_dict(), "accuracies": c.accuracies}
                for row, c in zip(self.rows(), self.candidates)
            ],
            "selected": [self.candidates[i].label for i in self.selected],
        }


def standard_error(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(len(values)))


def selection_rule(stats: Sequence[tuple[float, float]]) -> list[int]:
    """Indices with ``mean <= mean_min + se_min`` (always includes the argmin)."""
    if not stats:
        raise InvalidSpecError("selection needs at least one candidate")
    means = np.array([m for m, _ in stats], dtype=float)
    ses = np.array([s for _, s in stats], dtype=float)
    if np.any(ses < 0):
        raise InvalidSpecError("standard errors must be nonnegative")
    best = int(np.argmin(means))
    threshold = means[best] + ses[best]
    return [i for i in range(len(means)) if means[i] <= threshold]


def stratified_split(d: np.ndarray, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split indices so every domain keeps ``fraction`` of its samples in train."""
    train, val = [], []
    for dom in np.unique(d):
        idx = rng.permutation(np.flatnonzero(d == dom))
        cut = int(round(fraction * len(idx)))
        cut = min(max(cut, 1), len(idx) - 1)
        train.append(idx[:cut])
        val.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def _check_domains(data: DomainDataset) -> None:
    doms, counts = np.unique(data.d, return_counts=True)
    if len(doms) < 2:
        raise InsufficientDomainsError(f"SDA needs >= 2 training domains, got {len(doms)}")
    if counts.min() < 2:
        raise InsufficientDomainsError("every domain needs at least 2 samples")


def _relabel_domains(data: DomainDataset) -> DomainDataset:
    doms = data.domains
    if doms == list(range(len(doms))) and data.num_domains == len(doms):
        return data
    return data.select_domains(doms, relabel=True)


def domain_accuracy(
    data: DomainDataset,
    spec: Augmentation | None,
    config: SdaConfig,
    master_seed: int,
    candidate: int,
    repetition: int,
) -> float:
    """One SDA run: validation domain accuracy of a classifier trained with ``spec``."""
    split_rng = derive_rng(master_seed, _SPLIT_KEY, repetition)
    train_idx, val_idx = stratified_split(data.d, config.split_fraction, split_rng)
    train, val = data.subset(train_idx), data.subset(val_idx)
    rng = derive_rng(master_seed, candidate, repetition)
    n_in = int(np.prod(data.x.shape[1:]))
    model = Mlp.create([n_in, config.hidden, data.num_domains], rng)
    cfg = config.classifier.with_augmentations([] if spec is None else [spec])
    train_erm(model, train, cfg, rng, label="d")
    return float(evaluate(model, val, label="d").accuracy)


def _run_grid(data, specs, config, master_seed, index_offset=0):
    jobs = [(i, r) for i in range(len(specs)) for r in range(config.seeds)]

    def one(job):
        i, r = job
        return domain_accuracy(data, specs[i], config, master_seed, i + index_offset, r)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            accs = list(pool.map(one, jobs))
    else:
        accs = [one(job) for job in jobs]
    grid = np.array(accs).reshape(len(specs), config.seeds)
    return [list(map(float, row)) for row in grid]


def _master_seed(seed) -> int:
    if isinstance(seed, np.random.Generator):
        return spawn_seed(seed)
    return int(seed)


def run_sda(training_domains: DomainDataset, config: SdaConfig, seed: int | np.random.Generator = 0) -> SdaResult:
    _check_domains(training_domains)
    data = _relabel_domains(training_domains)
    master = _master_seed(seed)
    grid = _run_grid(data, config.candidates, config, master)
    stats = [CandidateStats(spec_label(s), s, accs) for s, accs in zip(config.candidates, grid)]
    selected = selection_rule([(c.mean, c.standard_error) for c in stats])
    return SdaResult(stats, selected)


def sweep_rotation_ranges(
    training_domains: DomainDataset,
    ranges: Sequence[tuple[float, float]],
    config: SdaConfig,
    seed: int | np.random.Generator = 0,
) -> list[tuple[tuple[float, float], float, float]]:
    """Step 2 of SDA for ``Rotation(lo, hi)`` over each range, in the given order."""
    if not ranges:
        raise InvalidSpecError("need at least one rotation range")
    _check_domains(training_domains)
    data = _relabel_domains(training_domains)
    specs = [Rotation(float(lo), float(hi)) for lo, hi in ranges]
    grid = _run_grid(data, specs, config, _master_seed(seed))
    return [((float(lo), float(hi)), float(np.mean(a)), standard_error(a)) for (lo, hi), a in zip(ranges, grid)]


def baseline_domain_accuracy(training_domains: DomainDataset, config: SdaConfig, seed: int = 0) -> tuple[float, float]:
    """Mean and standard error of the domain accuracy without augmentation."""
    _check_domains(training_domains)
    data = _relabel_domains(training_domains)
    grid = _run_grid(data, [None], config, _master_seed(seed), index_offset=10_000)
    return float(np.mean(grid[0])), standard_error(grid[0])


__all__ = [
    "SdaConfig", "SdaResult", "CandidateStats", "run_sda", "selection_rule",
    "sweep_rotation_ranges", "stratified_split", "standard_error", "baseline_domain_accuracy",
    "domain_accuracy",
]
