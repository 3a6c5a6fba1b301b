"""Experiment orchestration: method-by-seed grids, aggregation, reports.

An experiment spec is a JSON file naming a dataset, the methods to run,
the seeds, and the metrics to aggregate.  Each (method, seed) run trains,
evaluates on the test split, and writes its artifacts; a run that raises
is recorded as a failure and the grid continues.  Means and sample
standard deviations are aggregated across seeds per method and metric.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, fields

import numpy as np

from .data import (
    CLASSIFICATION,
    ColumnSpec,
    Dataset,
    binarize_label,
    dataset_from_csv,
    load_idx,
    make_synthetic,
    split,
    subset,
    TEST,
)
from .errors import DataError
from .metrics import (
    GAUSSIAN,
    NeighborhoodSpec,
    global_surrogate_provider,
    gnf,
)
from .moo import dominates
from .nn import MlpModel, mlp_to_dict
from .surrogate import LinearSurrogate, surrogate_to_dict
from .trainers import (
    GS,
    MOO,
    TrainConfig,
    TrainReport,
    local_surrogate_provider,
    report_to_dict,
    run_method,
    train_joint_moo,
    train_weighted,
)

RESULTS_SCHEMA = "tandem-results"
RESULTS_VERSION = 1

TASK_METRIC = "task"
GF_METRIC = "gf"
GNF_METRIC = "gnf"
KNOWN_METRICS = (TASK_METRIC, GF_METRIC, GNF_METRIC)

PARETO_ALPHAS = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class GnfSettings:
    """How the GNF metric is evaluated during an experiment."""

    points: int = 50
    count: int = 10
    sigma2: float = 0.1
    kind: str = GAUSSIAN
    patch_size: int = 4
    num_patches: int = 3
    local: bool = False


@dataclass(frozen=True)
class ExperimentSpec:
    """Parsed experiment description.

    ``dataset`` is a descriptor dictionary (see resolve_dataset);
    ``methods`` holds per-method config overrides on top of
    ``base_config``; paths inside the descriptor are resolved against
    ``base_dir``.
    """

    dataset: dict
    methods: tuple[dict, ...]
    seeds: tuple[int, ...]
    metrics: tuple[str, ...] = (TASK_METRIC, GF_METRIC)
    gnf: GnfSettings = GnfSettings()
    output_dir: str = "out"
    base_config: dict | None = None
    base_dir: str = "."

    def __post_init__(self) -> None:
        if len(self.methods) < 1 or len(self.seeds) < 1:
            raise DataError("experiment needs at least one method and one seed")
        for metric in self.metrics:
            if metric not in KNOWN_METRICS:
                raise DataError(f"unknown metric {metric!r}")
        if self.dataset.get("kind") not in ("synthetic", "csv", "idx"):
            raise DataError("dataset kind must be synthetic, csv, or idx")


@dataclass(frozen=True)
class ResultRow:
    """One aggregated line: metric mean and across-seed sample std."""

    dataset: str
    method: str
    metric: str
    mean: float
    std: float | None


@dataclass(frozen=True)
class RunFailure:
    dataset: str
    method: str
    seed: int
    error: str


@dataclass(frozen=True)
class RunOutcome:
    """Everything produced by one successful (method, seed) run."""

    method: str
    seed: int
    model: MlpModel | None
    surrogate: LinearSurrogate
    report: TrainReport


_SPEC_KEYS = frozenset(
    {"dataset", "methods", "seeds", "metrics", "gnf", "output_dir", "config"}
)


def spec_from_dict(raw: dict, base_dir: str = ".") -> ExperimentSpec:
    unknown = set(raw) - _SPEC_KEYS
    if unknown:
        raise DataError(f"unknown experiment spec keys: {sorted(unknown)}")
    dataset = raw.get("dataset")
    if isinstance(dataset, str):
        path = os.path.join(base_dir, dataset)
        with open(path, encoding="utf-8") as fh:
            dataset = json.load(fh)
        base_dir = os.path.dirname(path) or "."
    if not isinstance(dataset, dict):
        raise DataError("spec needs a dataset descriptor or descriptor path")
    gnf_settings = GnfSettings(**raw.get("gnf", {}))
    return ExperimentSpec(
        dataset=dataset,
        methods=tuple(raw.get("methods", ())),
        seeds=tuple(int(s) for s in raw.get("seeds", ())),
        metrics=tuple(raw.get("metrics", (TASK_METRIC, GF_METRIC))),
        gnf=gnf_settings,
        output_dir=raw.get("output_dir", "out"),
        base_config=raw.get("config"),
        base_dir=base_dir,
    )


def load_experiment_spec(path: str) -> ExperimentSpec:
    """Read a JSON experiment spec; relative paths resolve against it."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return spec_from_dict(raw, os.path.dirname(path) or ".")


def load_dataset_descriptor(path: str) -> tuple[dict, str]:
    """Read a JSON dataset descriptor, returning it with its directory."""
    with open(path, encoding="utf-8") as fh:
        descriptor = json.load(fh)
    return descriptor, os.path.dirname(path) or "."


def resolve_dataset(descriptor: dict, seed: int, base_dir: str = ".") -> Dataset:
    """Build the seeded, split dataset a descriptor refers to.

    synthetic: {"kind": "synthetic", "generator", "n", "d", "noise"}.
    csv: {"kind": "csv", "path", "columns": [{"name", "kind", "levels"?}]}.
    idx: {"kind": "idx", "images", "labels", "digit"}.
    The same seed drives generation and the split, so every method at one
    seed sees identical data.
    """
    kind = descriptor.get("kind")
    if kind == "synthetic":
        dataset = make_synthetic(
            descriptor["generator"],
            int(descriptor["n"]),
            int(descriptor["d"]),
            float(descriptor.get("noise", 0.0)),
            seed,
        )
        return split(dataset, seed=seed)
    if kind == "csv":
        schema = [
            ColumnSpec(
                name=c["name"],
                kind=c["kind"],
                levels=tuple(c["levels"]) if c.get("levels") else None,
            )
            for c in descriptor["columns"]
        ]
        path = os.path.join(base_dir, descriptor["path"])
        dataset, _ = dataset_from_csv(path, schema, seed=seed)
        return dataset
    if kind == "idx":
        images = load_idx(
            os.path.join(base_dir, descriptor["images"]),
            os.path.join(base_dir, descriptor["labels"]),
        )
        dataset = binarize_label(images, int(descriptor["digit"]))
        return split(dataset, seed=seed)
    raise DataError(f"unknown dataset kind {kind!r}")


def dataset_name(descriptor: dict) -> str:
    if "name" in descriptor:
        return str(descriptor["name"])
    kind = descriptor.get("kind")
    if kind == "synthetic":
        return str(descriptor.get("generator", "synthetic"))
    if kind == "csv":
        return os.path.splitext(os.path.basename(descriptor["path"]))[0]
    return f"digit{descriptor.get('digit', '')}"


_CONFIG_FIELDS = {f.name for f in fields(TrainConfig)}


def build_config(entry: dict, base: dict | None, seed: int) -> TrainConfig:
    """Merge base and per-method settings into a validated TrainConfig."""
    merged = dict(base or {})
    merged.update(entry)
    merged["seed"] = seed
    unknown = set(merged) - _CONFIG_FIELDS
    if unknown:
        raise DataError(f"unknown config keys: {sorted(unknown)}")
    if "hidden" in merged:
        merged["hidden"] = tuple(int(h) for h in merged["hidden"])
    return TrainConfig(**merged)


def method_label(config: TrainConfig) -> str:
    if config.method == GS:
        return f"GS({config.alpha:g})"
    return config.method


def _neighborhood_spec(settings: GnfSettings, dataset: Dataset, seed: int) -> NeighborhoodSpec:
    return NeighborhoodSpec(
        kind=settings.kind,
        count=settings.count,
        sigma2=settings.sigma2,
        patch_size=settings.patch_size,
        num_patches=settings.num_patches,
        image_dims=dataset.image_dims,
        seed=seed,
    )


def evaluate_gnf(
    model: MlpModel | None,
    surrogate: LinearSurrogate,
    seed: int,
    dataset: Dataset,
    settings: GnfSettings,
    config: TrainConfig,
) -> float | None:
    """GNF of one trained model over the first test instances.

    Uses per-instance local fits when settings.local is set, otherwise the
    given global surrogate.  The linear-only method has no black-box to
    explain, so its GNF is absent (None).
    """
    if model is None:
        return None
    X, _ = subset(dataset, TEST)
    if X.shape[0] == 0:
        X = dataset.features
    X = X[: settings.points]
    spec = _neighborhood_spec(settings, dataset, seed)
    if settings.local:
        provider = local_surrogate_provider(model, config)
    else:
        provider = global_surrogate_provider(surrogate)
    return gnf(model, provider, X, spec)


def _safe_name(label: str) -> str:
    return label.replace("(", "_").replace(")", "")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_run_artifacts(out_dir: str, name: str, outcome: RunOutcome,
                        feature_names: tuple[str, ...]) -> None:
    runs_dir = os.path.join(out_dir, "runs")
    os.makedirs(runs_dir, exist_ok=True)
    stem = f"{name}_{_safe_name(outcome.method)}_{outcome.seed}"
    _write_json(os.path.join(runs_dir, f"{stem}_report.json"),
                report_to_dict(outcome.report))
    _write_json(os.path.join(runs_dir, f"{stem}_surrogate.json"),
                surrogate_to_dict(outcome.surrogate, feature_names))
    if outcome.model is not None:
        _write_json(os.path.join(runs_dir, f"{stem}_model.json"),
                    mlp_to_dict(outcome.model))


def _metric_value(outcome: RunOutcome, metric: str) -> float | None:
    if metric == TASK_METRIC:
        return outcome.report.task_metric
    if metric == GF_METRIC:
        return outcome.report.gf
    return outcome.report.gnf


def _metric_name(metric: str, dataset: Dataset) -> str:
    if metric == TASK_METRIC:
        return "f1" if dataset.task == CLASSIFICATION else "mse"
    return metric


def aggregate_rows(
    name: str,
    dataset: Dataset,
    labels: list[str],
    outcomes: list[RunOutcome],
    metrics: tuple[str, ...],
) -> list[ResultRow]:
    """Mean and sample std per (method label, metric) across seeds.

    Metrics absent for a method (fidelity of the linear predictor) produce
    no row.  std is None with fewer than two values.
    """
    rows: list[ResultRow] = []
    for label in labels:
        runs = [o for o in outcomes if o.method == label]
        for metric in metrics:
            values = [_metric_value(o, metric) for o in runs]
            values = [v for v in values if v is not None]
            if not values:
                continue
            std = float(np.std(values, ddof=1)) if len(values) >= 2 else None
            rows.append(ResultRow(
                dataset=name,
                method=label,
                metric=_metric_name(metric, dataset),
                mean=float(np.mean(values)),
                std=std,
            ))
    return rows


def run_experiment(
    spec: ExperimentSpec,
) -> tuple[list[ResultRow], list[RunOutcome], list[RunFailure]]:
    """Run the method-by-seed grid and aggregate results.

    Datasets are resolved once per seed and shared by all methods at that
    seed.  A run that raises becomes a RunFailure; the rest continue.
    Per-run artifacts (report, model, surrogate) are written under
    output_dir/runs.
    """
    name = dataset_name(spec.dataset)
    datasets: dict[int, Dataset] = {}
    outcomes: list[RunOutcome] = []
    failures: list[RunFailure] = []
    labels: list[str] = []

    for entry in spec.methods:
        entry_label = str(entry.get("method", "?"))
        for seed in spec.seeds:
            try:
                config = build_config(entry, spec.base_config, seed)
                entry_label = method_label(config)
                if seed not in datasets:
                    datasets[seed] = resolve_dataset(spec.dataset, seed, spec.base_dir)
                dataset = datasets[seed]
                model, surrogate, report = run_method(dataset, config)
                outcome = RunOutcome(
                    method=entry_label, seed=seed,
                    model=model, surrogate=surrogate, report=report,
                )
                if GNF_METRIC in spec.metrics:
                    value = evaluate_gnf(
                        model, surrogate, seed, dataset, spec.gnf, config
                    )
                    outcome = dataclasses.replace(
                        outcome, report=dataclasses.replace(report, gnf=value)
                    )
                outcomes.append(outcome)
                write_run_artifacts(
                    spec.output_dir, name, outcome, dataset.feature_names
                )
            except Exception as exc:
                failures.append(RunFailure(
                    dataset=name, method=entry_label, seed=seed, error=str(exc),
                ))
        if entry_label not in labels:
            labels.append(entry_label)

    sample = next(iter(datasets.values()), None)
    if sample is None:
        return [], outcomes, failures
    rows = aggregate_rows(name, sample, labels, outcomes, spec.metrics)
    return rows, outcomes, failures


@dataclass(frozen=True)
class ScatterPoint:
    """One (task metric, fidelity) point from the trade-off scan."""

    seed: int
    method: str
    alpha: float | None
    task_metric: float
    gf: float
    dominated: bool


def _task_loss(value: float, task: str) -> float:
    # Dominance wants losses; F1 is a score, so flip its orientation.
    return 1.0 - value if task == CLASSIFICATION else value


def pareto_scan(
    spec: ExperimentSpec,
) -> tuple[list[ScatterPoint], list[RunFailure]]:
    """Trade-off scan: nine fixed-weight runs plus the min-norm run per seed.

    Every point carries a dominance flag computed within its seed using
    (task loss, fidelity) pairs, both oriented as losses.
    """
    name = dataset_name(spec.dataset)
    base = dict(spec.base_config or {})
    base.pop("method", None)
    base.pop("alpha", None)
    points: list[ScatterPoint] = []
    failures: list[RunFailure] = []

    for seed in spec.seeds:
        try:
            dataset = resolve_dataset(spec.dataset, seed, spec.base_dir)
        except Exception as exc:
            failures.append(RunFailure(name, "dataset", seed, str(exc)))
            continue
        seed_points: list[tuple[str, float | None, TrainReport]] = []
        config = build_config({"method": MOO}, base, seed)
        try:
            _, _, report = train_joint_moo(dataset, config)
            seed_points.append((MOO, None, report))
        except Exception as exc:
            failures.append(RunFailure(name, MOO, seed, str(exc)))
        for alpha in PARETO_ALPHAS:
            config = build_config({"method": GS, "alpha": alpha}, base, seed)
            try:
                _, _, report = train_weighted(dataset, config)
                seed_points.append((method_label(config), alpha, report))
            except Exception as exc:
                failures.append(RunFailure(name, method_label(config), seed, str(exc)))

        losses = [
            np.asarray([_task_loss(r.task_metric, dataset.task), r.gf])
            for _, _, r in seed_points
        ]
        for i, (label, alpha, report) in enumerate(seed_points):
            dominated = any(
                dominates(losses[j], losses[i])
                for j in range(len(seed_points)) if j != i
            )
            points.append(ScatterPoint(
                seed=seed, method=label, alpha=alpha,
                task_metric=report.task_metric, gf=report.gf,
                dominated=dominated,
            ))
    return points, failures


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6g}"


def emit_report(rows: list[ResultRow], fmt: str, path: str) -> None:
    """Write the aggregated table as CSV or versioned JSON.

    Columns are fixed as dataset,method,metric,mean,std with floats at six
    significant digits; an empty table still gets the CSV header.
    """
    if fmt == "csv":
        lines = ["dataset,method,metric,mean,std"]
        for row in rows:
            lines.append(
                f"{row.dataset},{row.method},{row.metric},"
                f"{_fmt(row.mean)},{_fmt(row.std)}"
            )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        return
    if fmt == "json":
        payload = {
            "schema": RESULTS_SCHEMA,
            "version": RESULTS_VERSION,
            "rows": [
                {
                    "dataset": row.dataset,
                    "method": row.method,
                    "metric": row.metric,
                    "mean": float(_fmt(row.mean)),
                    "std": None if row.std is None else float(_fmt(row.std)),
                }
                for row in rows
            ],
        }
        _write_json(path, payload)
        return
    raise ValueError(f"unknown report format {fmt!r}")


def read_report_csv(path: str) -> list[ResultRow]:
    """Parse a CSV report back into rows (inverse of emit_report)."""
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line]
    if not lines or lines[0] != "dataset,method,metric,mean,std":
        raise DataError(f"{path}: not a results CSV")
    rows = []
    for line in lines[1:]:
        dataset, method, metric, mean, std = line.split(",")
        rows.append(ResultRow(
            dataset=dataset, method=method, metric=metric,
            mean=float(mean), std=None if std == "" else float(std),
        ))
    return rows


def emit_scatter(points: list[ScatterPoint], fmt: str, path: str) -> None:
    """Write trade-off scan points as CSV or versioned JSON."""
    if fmt == "csv":
        lines = ["seed,method,alpha,task_metric,gf,dominated"]
        for p in points:
            alpha = "" if p.alpha is None else f"{p.alpha:.6g}"
            lines.append(
                f"{p.seed},{p.method},{alpha},{_fmt(p.task_metric)},"
                f"{_fmt(p.gf)},{str(p.dominated).lower()}"
            )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        return
    if fmt == "json":
        payload = {
            "schema": "tandem-pareto",
            "version": RESULTS_VERSION,
            "points": [
                {
                    "seed": p.seed,
                    "method": p.method,
                    "alpha": p.alpha,
                    "task_metric": float(_fmt(p.task_metric)),
                    "gf": float(_fmt(p.gf)),
                    "dominated": p.dominated,
                }
                for p in points
            ],
        }
        _write_json(path, payload)
        return
    raise ValueError(f"unknown report format {fmt!r}")


def write_failures(failures: list[RunFailure], out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        "failures": [
            {"dataset": f.dataset, "method": f.method, "seed": f.seed,
             "error": f.error}
            for f in failures
        ]
    }
    _write_json(os.path.join(out_dir, "failures.json"), payload)
