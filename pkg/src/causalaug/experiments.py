"""Experiment drivers: synthetic SCM regression, SDA on rotated/coloured
digits, end-task training, the all-augmentations ablation and the rotation
range sweep.  Each driver returns a ``ResultTable``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import augment as aug
from .analysis import BoundReport, invariance_bound
from .datasets import (
    DomainDataset,
    build_colored_mnist,
    build_rotated_mnist,
    dataset_stats,
    load_mnist,
)
from .errors import ConfigError
from .models import Mlp, TrainConfig, evaluate, ols_fit, train_erm
from .rng import derive_rng, derive_seed
from .scm import InterventionSpec, Noise, Node, random_scm, sample_interventional, sample_observational
from .sda import SdaConfig, SdaResult, run_sda, standard_error, sweep_rotation_ranges

log = logging.getLogger(__name__)

EXPERIMENTS = (
    "synthetic", "sda", "rotated-mnist", "colored-mnist", "ablation",
    "sweep-rotation", "equivariance-check", "bound-check",
)
SWEEP_RANGES = ((-15, 15), (-45, 45), (-90, 90), (0, 180), (0, 359))

# stream keys for derive_seed, one per experiment family
_KEY_SYNTH, _KEY_ROT, _KEY_COL, _KEY_SWEEP, _KEY_EQ = 101, 202, 303, 404, 505


@dataclass
class ExperimentConfig:
    experiment: str = "synthetic"
    master_seed: int = 0
    repetitions: int | None = None
    mnist_dir: str | None = None
    out_dir: str = "results"
    fast: bool = False
    # synthetic SCM regression
    dim: int = 5
    sigma_c: float = 1.0
    sigma: float = 0.1
    n_train: int = 1000
    n_test: int = 1000
    noise_lo: float = -10.0
    noise_hi: float = 10.0
    aug_copies: int = 10
    resample_scm: bool = True
    # digit datasets
    count_range: tuple[int, int] = (80, 160)
    max_test: int | None = None
    max_per_domain: int | None = 5000
    # classifiers
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 32
    hidden: int = 256
    # SDA
    sda_seeds: int = 5
    sda_epochs: int = 15
    split_fraction: float = 0.8
    workers: int = 1
    candidates: list[dict] | None = None
    sweep_ranges: list[tuple[float, float]] = field(default_factory=lambda: [tuple(r) for r in SWEEP_RANGES])
    sweep_held_out: int = 0
    # equivariance / bound checks
    eq_n: int = 6
    eq_m: int = 4
    eq_trials: int = 1000
    eq_tolerance: float = 1e-9
    eq_generic: bool = False
    bound_input: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.repetitions is not None and self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        self.count_range = tuple(int(v) for v in self.count_range)
        self.sweep_ranges = [tuple(float(v) for v in r) for r in self.sweep_ranges]

    @property
    def reps(self) -> int:
        if self.repetitions is not None:
            return self.repetitions
        return 50 if self.experiment == "synthetic" else 5

    def candidate_specs(self) -> list[aug.Augmentation]:
        if self.candidates is None:
            return aug.default_augmentation_list()
        return [aug.spec_from_dict(c) for c in self.candidates]

    def classifier(self, augmentations=()) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, 0, list(augmentations))

    def sda_config(self) -> SdaConfig:
        clf = TrainConfig(self.learning_rate, self.sda_epochs, self.batch_size, 0)
        return SdaConfig(self.candidate_specs(), self.sda_seeds, self.split_fraction, clf, self.hidden, self.workers)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | os.PathLike, **overrides) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)


# --------------------------------------------------------------------------
# result tables


@dataclass
class ResultTable:
    experiment: str
    rows: list[dict] = field(default_factory=list)
    raw: dict[str, Any] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)

    COLUMNS = ("experiment", "condition", "metric", "mean", "standard_error", "repetitions")

    def add(self, condition: str, metric: str, values: Sequence[float]) -> dict:
        values = [float(v) for v in values]
        row = {
            "experiment": self.experiment,
            "condition": condition,
            "metric": metric,
            "mean": float(np.mean(values)),
            "standard_error": standard_error(values),
            "repetitions": len(values),
        }
        self.rows.append(row)
        self.raw.setdefault("per_repetition", {})[f"{condition}/{metric}"] = values
        return row

    def get(self, condition: str, metric: str) -> dict:
        for row in self.rows:
            if row["condition"] == condition and row["metric"] == metric:
                return row
        raise KeyError((condition, metric))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: row[k] for k in self.COLUMNS})
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "config": self.config, "rows": self.rows, "raw": self.raw}

    def write(self, out_dir: str | os.PathLike, name: str | None = None) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        name = name or self.experiment
        csv_path = atomic_write(out_dir / f"{name}.csv", self.to_csv())
        json_path = atomic_write(out_dir / f"{name}.json", json.dumps(self.to_dict(), indent=2, default=_json_default))
        return csv_path, json_path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def atomic_write(path: str | os.PathLike, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# --------------------------------------------------------------------------
# synthetic SCM regression


def synthetic_conditions(dim: int) -> list[tuple[str, list[int] | None, list[int]]]:
    """``(name, feature subset or None for all, augmented feature indices)``."""
    conds = [("erm_all", None, []), ("erm_hy", list(range(dim, 2 * dim)), [])]
    for kd in range(1, dim + 1):
        for ky in range(0, dim):
            dims = list(range(kd)) + [dim + j for j in range(ky)]
            conds.append((f"da_kd{kd}_ky{ky}", None, dims))
    return conds


def _augmented_design(X, t, dims, lo, hi, copies, rng):
    if not dims:
        return X, t
    spec = aug.UniformNoise(lo, hi, tuple(dims))
    Xa = np.concatenate([aug.apply_augmentation(spec, X, rng) for _ in range(copies)])
    return Xa, np.tile(t, copies)


def run_synthetic(config: ExperimentConfig) -> ResultTable:
    """Train on observational data, test under ``do(d := N(0, I))``.

    Augmented conditions fit least squares on ``aug_copies`` independently
    augmented copies of the training set.
    """
    table = ResultTable("synthetic", config=config.to_dict())
    conds = synthetic_conditions(config.dim)
    test_mse = {name: [] for name, _, _ in conds}
    train_mse = {name: [] for name, _, _ in conds}
    shared = random_scm(config.dim, config.sigma_c, config.sigma, derive_rng(config.master_seed, _KEY_SYNTH))
    do_d = InterventionSpec(Node.D, Noise())
    for rep in range(config.reps):
        rng = derive_rng(config.master_seed, _KEY_SYNTH, rep)
        scm = random_scm(config.dim, config.sigma_c, config.sigma, rng) if config.resample_scm else shared
        train = sample_observational(scm, config.n_train, rng)
        test = sample_interventional(scm, do_d, config.n_test, rng)
        for name, cols, dims in conds:
            cols_ = slice(None) if cols is None else cols
            Xa, ta = _augmented_design(train.x, train.target, dims, config.noise_lo, config.noise_hi,
                                       config.aug_copies, rng)
            model = ols_fit(Xa[:, cols_], ta)
            train_mse[name].append(evaluate(model, (train.x[:, cols_], train.target)).mse)
            test_mse[name].append(evaluate(model, (test.x[:, cols_], test.target)).mse)
    for name, _, _ in conds:
        table.add(name, "test_mse", test_mse[name])
        table.add(name, "train_mse", train_mse[name])
    return table


# --------------------------------------------------------------------------
# digit experiments


def load_digits_arrays(config: ExperimentConfig) -> dict:
    if not config.mnist_dir:
        raise FileNotFoundError("this experiment needs --mnist-dir pointing at the MNIST IDX files")
    return load_mnist(config.mnist_dir)


def make_rotated(config: ExperimentConfig, arrays: dict):
    rng = derive_rng(config.master_seed, _KEY_ROT, 0xDA7A)
    return build_rotated_mnist(
        arrays["train_images"], arrays["train_labels"], arrays["test_images"], arrays["test_labels"],
        rng, count_range=config.count_range, fast=config.fast, max_test=config.max_test,
    )


def make_colored(config: ExperimentConfig, arrays: dict) -> DomainDataset:
    rng = derive_rng(config.master_seed, _KEY_COL, 0xDA7A)
    return build_colored_mnist(
        arrays["train_images"], arrays["train_labels"], rng,
        test_images=arrays.get("test_images"), test_labels=arrays.get("test_labels"),
        fast=config.fast, max_per_domain=config.max_per_domain,
    )


def train_classifier(config: ExperimentConfig, train: DomainDataset, augmentations, seed: int) -> Mlp:
    """End-task MLP; the seed alone fixes init and minibatch order."""
    rng = np.random.default_rng(seed)
    n_in = int(np.prod(train.x.shape[1:]))
    model = Mlp.create([n_in, config.hidden, train.num_classes], rng)
    return train_erm(model, train, config.classifier(augmentations), rng)


def _selected_specs(result: SdaResult) -> list[aug.Augmentation]:
    return [result.candidates[i].spec for i in result.selected]


def _add_sda_rows(table: ResultTable, prefix: str, result: SdaResult) -> None:
    for c in result.candidates:
        table.add(f"{prefix}sda/{c.label}", "domain_accuracy", c.accuracies)
    table.raw.setdefault("sda", {})[prefix.rstrip("/") or "all"] = result.to_dict()


def rotated_sda(config: ExperimentConfig, train: DomainDataset, angles) -> dict[float, SdaResult]:
    out = {}
    for held, angle in enumerate(angles):
        domains = [i for i in range(len(angles)) if i != held]
        t0 = time.perf_counter()
        out[angle] = run_sda(train.select_domains(domains), config.sda_config(),
                             derive_seed(config.master_seed, _KEY_ROT, 1, held))
        log.info("SDA held-out %s: selected %s (%.1fs)", angle, out[angle].selected_labels,
                 time.perf_counter() - t0)
    return out


def run_rotated_mnist(
    config: ExperimentConfig,
    arrays: dict | None = None,
    sda_results: dict[float, SdaResult] | None = None,
    include_all_da: bool = False,
) -> ResultTable:
    arrays = arrays if arrays is not None else load_digits_arrays(config)
    train, tests = make_rotated(config, arrays)
    angles = list(tests)
    table = ResultTable("rotated-mnist", config=config.to_dict())
    if sda_results is None:
        sda_results = rotated_sda(config, train, angles)
    methods = {"erm": lambda sel: [], "sda": lambda sel: sel}
    if include_all_da:
        methods["all_da"] = lambda sel: config.candidate_specs()
    per_method = {m: [] for m in methods}
    for held, angle in enumerate(angles):
        result = sda_results[angle]
        _add_sda_rows(table, f"heldout{angle:g}/", result)
        data = train.select_domains([i for i in range(len(angles)) if i != held])
        selected = _selected_specs(result)
        for method, pick in methods.items():
            accs = []
            for rep in range(config.reps):
                seed = derive_seed(config.master_seed, _KEY_ROT, 2, held, rep)
                model = train_classifier(config, data, pick(selected), seed)
                accs.append(evaluate(model, tests[angle]).accuracy)
            table.add(f"heldout{angle:g}/{method}", "test_accuracy", accs)
            per_method[method].append(accs)
    for method, accs in per_method.items():
        table.add(f"average/{method}", "test_accuracy", np.mean(accs, axis=0))
    table.raw["selected"] = {f"{a:g}": r.selected_labels for a, r in sda_results.items()}
    return table


def _grayscale_only(ds: DomainDataset) -> DomainDataset:
    gray = ds.x.max(axis=-1, keepdims=True)
    return ds.with_x(np.repeat(gray, 3, axis=-1))


def colored_sda(config: ExperimentConfig, ds: DomainDataset) -> SdaResult:
    return run_sda(ds.select_domains([0, 1]), config.sda_config(), derive_seed(config.master_seed, _KEY_COL, 1))


def run_colored_mnist(
    config: ExperimentConfig,
    arrays: dict | None = None,
    sda_result: SdaResult | None = None,
    include_all_da: bool = False,
) -> ResultTable:
    """SDA on the two training domains, then ERM / SDA / hue / shape-only classifiers.

    ``shape_only`` removes colour from training and test images; its test
    accuracy approximates the ceiling set by the label noise.
    """
    arrays = arrays if arrays is not None else load_digits_arrays(config)
    ds = make_colored(config, arrays)
    table = ResultTable("colored-mnist", config=config.to_dict())
    if sda_result is None:
        sda_result = colored_sda(config, ds)
    _add_sda_rows(table, "", sda_result)
    train = ds.select_domains([0, 1])
    test = ds.select_domains([2], relabel=False)
    methods = {
        "erm": (train, test, []),
        "sda": (train, test, _selected_specs(sda_result)),
        "hue": (train, test, [aug.Hue(0.5)]),
        "shape_only": (_grayscale_only(train), _grayscale_only(test), []),
    }
    if include_all_da:
        methods["all_da"] = (train, test, config.candidate_specs())
    details = {}
    for method, (tr, te, augs) in methods.items():
        train_acc, test_acc, risks = [], [], []
        for rep in range(config.reps):
            seed = derive_seed(config.master_seed, _KEY_COL, 2, rep)
            model = train_classifier(config, tr, augs, seed)
            train_acc.append(evaluate(model, tr).accuracy)
            test_acc.append(evaluate(model, te).accuracy)
            risks.append([1.0 - evaluate(model, tr.select_domains([k], relabel=False)).accuracy for k in (0, 1)]
                         + [1.0 - test_acc[-1]])
        table.add(method, "train_accuracy", train_acc)
        table.add(method, "test_accuracy", test_acc)
        details[method] = {"domain_risks": np.mean(risks, axis=0).tolist()}
    marginals = dataset_stats(ds)
    table.raw["label_marginals"] = {str(k): v.tolist() for k, v in marginals.items()}
    table.raw["methods"] = details
    table.raw["selected"] = sda_result.selected_labels
    bound = invariance_bound([marginals[k] for k in sorted(marginals)], details["hue"]["domain_risks"])
    table.raw["bound_hue"] = bound.to_dict()
    return table


def run_ablation_all_da(
    config: ExperimentConfig,
    arrays: dict | None = None,
    rotated_sda_results: dict[float, SdaResult] | None = None,
    colored_sda_result: SdaResult | None = None,
) -> ResultTable:
    """All ten augmentations applied jointly versus the SDA selection."""
    arrays = arrays if arrays is not None else load_digits_arrays(config)
    rot = run_rotated_mnist(config, arrays, rotated_sda_results, include_all_da=True)
    col = run_colored_mnist(config, arrays, colored_sda_result, include_all_da=True)
    table = ResultTable("ablation", config=config.to_dict())
    for src, prefix, cond in ((rot, "rotated", "average/{}"), (col, "colored", "{}")):
        for method in ("all_da", "sda", "erm"):
            values = src.raw["per_repetition"][f"{cond.format(method)}/test_accuracy"]
            table.add(f"{prefix}/{method}", "test_accuracy", values)
    table.raw["rotated"] = rot.to_dict()
    table.raw["colored"] = col.to_dict()
    return table


def run_sweep_rotation(config: ExperimentConfig, arrays: dict | None = None) -> ResultTable:
    arrays = arrays if arrays is not None else load_digits_arrays(config)
    train, tests = make_rotated(config, arrays)
    held = config.sweep_held_out
    data = train.select_domains([i for i in range(train.num_domains) if i != held])
    stats = sweep_rotation_ranges(data, config.sweep_ranges, config.sda_config(),
                                  derive_seed(config.master_seed, _KEY_SWEEP))
    table = ResultTable("sweep-rotation", config=config.to_dict())
    for (lo, hi), mean, se in stats:
        row = {"experiment": table.experiment, "condition": f"rotation[{lo:g},{hi:g}]",
               "metric": "domain_accuracy", "mean": mean, "standard_error": se,
               "repetitions": config.sda_seeds}
        table.rows.append(row)
    return table


# --------------------------------------------------------------------------
# checks


def run_equivariance_check(config: ExperimentConfig) -> dict:
    from .equivariance import LinearCausalProcess, PermutationMatrix, check_equivariance, invariant_process

    rng = derive_rng(config.master_seed, _KEY_EQ)
    if config.eq_generic:
        while True:
            C = rng.standard_normal((config.eq_n, config.eq_n))
            if np.linalg.cond(C) < 1e6:
                break
        proc = LinearCausalProcess(C, rng.standard_normal((config.eq_n, config.eq_m)), rng.standard_normal(config.eq_n))
    else:
        proc = invariant_process(config.eq_n, config.eq_m, rng)
    A = PermutationMatrix.random(config.eq_n, rng)
    report = check_equivariance(proc, A, config.eq_trials, config.eq_tolerance, rng)
    return {"permutation": list(A.perm), **report.to_dict()}


def run_bound_check(payload: dict) -> BoundReport:
    try:
        marginals = payload["marginals"]
        risks = payload["risks"]
    except (KeyError, TypeError) as exc:
        raise ConfigError("bound-check input needs 'marginals' and 'risks'") from exc
    return invariance_bound(marginals, risks)
