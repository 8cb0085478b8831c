"""The end-to-end audit: probe, split, fit on train, score on test, compare to chance."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .dataset import LabeledImageSet, SplitSpec, random_guess_accuracy, split
from .errors import AuditError, LeakprobeError
from .forest import ForestConfig, accuracy, fit
from .probes import (
    FeatureMatrix,
    ProbeId,
    build_feature_matrix,
    foreground_mask,
    probe_decisions,
    separate_background,
)

REPORT_SCHEMA = "leakprobe.report.v1"
BAND_SIGMAS = 3.0


@dataclass
class AuditReport:
    dataset_name: str
    probe_id: str
    n_classes: int
    n_train: int
    n_test: int
    per_class_test_counts: dict
    accuracy_percent: float
    chance_percent: float
    bias_ratio: float
    seed: int
    train_fraction: float
    forest_config: dict
    probe_decisions: dict
    model_sha256: str = ""
    toolkit_version: str = __version__
    schema: str = REPORT_SCHEMA
    extra: dict = field(default_factory=dict)

    @property
    def chance_band(self) -> float:
        """Half-width of the normal-approximation band around chance."""
        c = self.chance_percent
        return BAND_SIGMAS * math.sqrt(c * (100.0 - c) / self.n_test) if self.n_test else math.inf

    @property
    def bias_flag(self) -> bool:
        return self.accuracy_percent - self.chance_percent > self.chance_band

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AuditReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        return cls(**d)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (LeakprobeError, ValueError) as exc:
        if isinstance(exc, AuditError):
            raise
        raise AuditError(name, exc) from exc


def audit_matrix(
    matrix: FeatureMatrix,
    train_idx,
    test_idx,
    split_spec: SplitSpec,
    forest_config: ForestConfig,
    dataset_name: str,
    class_names: list[str],
    jobs: int = 1,
    region: str = "full frame",
) -> AuditReport:
    """Fit on ``train_idx`` rows only and score the held-out ``test_idx`` rows."""
    train = matrix.take(train_idx)
    test = matrix.take(test_idx)
    model = _stage("fit", fit, train, forest_config, jobs)
    acc = _stage("evaluate", accuracy, model, test)
    chance = random_guess_accuracy(matrix.n_classes)
    test_counts = np.bincount(test.labels, minlength=matrix.n_classes)
    return AuditReport(
        dataset_name=dataset_name,
        probe_id=matrix.probe_id.value,
        n_classes=matrix.n_classes,
        n_train=train.rows,
        n_test=test.rows,
        per_class_test_counts={name: int(test_counts[k]) for k, name in enumerate(class_names)},
        accuracy_percent=acc,
        chance_percent=chance,
        bias_ratio=acc / chance,
        seed=split_spec.seed,
        train_fraction=split_spec.train_fraction,
        forest_config=model.config.to_dict(),
        probe_decisions=probe_decisions(matrix.probe_id, region),
        model_sha256=model.sha256(),
    )


def _check_classes(dataset: LabeledImageSet):
    if dataset.n_classes < 2:
        raise AuditError("ingest", ValueError(f"an audit needs at least 2 classes, {dataset.name} has {dataset.n_classes}"))


def run_audit(
    dataset: LabeledImageSet,
    probe,
    split_spec: SplitSpec = SplitSpec(),
    forest_config: Optional[ForestConfig] = None,
    threads: int = 1,
) -> AuditReport:
    """Audit ``dataset`` with one probe. The forest seed defaults to the split seed."""
    _check_classes(dataset)
    probe = _stage("probe", ProbeId.parse, probe)
    if forest_config is None:
        forest_config = ForestConfig(seed=split_spec.seed)
    matrix = _stage("probe", build_feature_matrix, dataset, probe, threads)
    train_idx, test_idx = _stage("split", split, dataset, split_spec)
    return audit_matrix(
        matrix, train_idx, test_idx, split_spec, forest_config, dataset.name, dataset.class_names, threads
    )


def _check_aligned(original: LabeledImageSet, foreground: LabeledImageSet):
    if len(original) != len(foreground):
        raise ValueError(f"original has {len(original)} images but foreground has {len(foreground)}")
    if original.class_index != foreground.class_index:
        raise ValueError("original and foreground class indices differ")
    for i, (o, f) in enumerate(zip(original.records, foreground.records)):
        if o.label != f.label:
            raise ValueError(f"image {i}: label {o.label!r} ({o.source_path}) vs {f.label!r} ({f.source_path})")
        if o.pixels.shape != f.pixels.shape:
            raise ValueError(
                f"image {i}: shape {o.pixels.shape} ({o.source_path}) vs {f.pixels.shape} ({f.source_path})"
            )


def background_set(original: LabeledImageSet, foreground: LabeledImageSet) -> LabeledImageSet:
    records = [separate_background(o, f) for o, f in zip(original.records, foreground.records)]
    return LabeledImageSet(f"{original.name}_bg", records, dict(original.class_index))


def run_blur_triplet(
    original: LabeledImageSet,
    foreground: LabeledImageSet,
    split_spec: SplitSpec = SplitSpec(),
    forest_config: Optional[ForestConfig] = None,
    threads: int = 1,
) -> tuple[AuditReport, AuditReport, AuditReport]:
    """Blur-probe audits of full, foreground and background images over one shared split.

    The full images are scored over the whole frame. Foreground and background
    images are scored only inside their own region of the foreground mask;
    scoring the whole masked frame would mostly measure the sharp black
    boundary the masking itself creates.
    """
    _check_classes(original)
    _stage("align", _check_aligned, original, foreground)
    if forest_config is None:
        forest_config = ForestConfig(seed=split_spec.seed)
    background = _stage("separate", background_set, original, foreground)
    leaf = [foreground_mask(r) for r in foreground.records]
    legs = (
        (original, "_blur", None, "full frame"),
        (foreground, "_fg_blur", leaf, "inside foreground mask"),
        (background, "_bg_blur", [~m for m in leaf], "outside foreground mask"),
    )
    train_idx, test_idx = _stage("split", split, original, split_spec)
    reports = []
    for dataset, suffix, masks, region in legs:
        matrix = _stage("probe", build_feature_matrix, dataset, ProbeId.BLUR, threads, masks)
        reports.append(
            audit_matrix(
                matrix, train_idx, test_idx, split_spec, forest_config,
                original.name + suffix, original.class_names, threads, region,
            )
        )
    return tuple(reports)


def render_report(report: AuditReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), sort_keys=True, indent=2)
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}; use json or text")
    band = report.chance_band
    flag = "BIAS DETECTED" if report.bias_flag else "no detectable bias"
    lines = [
        f"dataset      {report.dataset_name}",
        f"probe        {report.probe_id}",
        f"classes      {report.n_classes}",
        f"split        {report.n_train} train / {report.n_test} test (seed {report.seed})",
        "",
        f"{'Dataset name':<28}{'Random guess accuracy':>24}{'Random forest':>16}",
        f"{_row_name(report):<28}"
        f"{report.chance_percent:>23.1f}%{report.accuracy_percent:>15.1f}%",
        "",
        f"bias ratio {report.bias_ratio:.1f}",
        f"chance band +/-{band:.1f} points ({BAND_SIGMAS:g} sigma): {flag}",
    ]
    return "\n".join(lines) + "\n"


def _row_name(report: AuditReport) -> str:
    suffix = "_" + report.probe_id
    return report.dataset_name if report.dataset_name.endswith(suffix) else report.dataset_name + suffix


def render_reports(reports, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2)
    return "\n".join(render_report(r, fmt) for r in reports)
