"""Automated quality inspection and retry orchestration.

Checkers return :class:`CheckReport` verdicts. A failed verdict sends the
stage back for another attempt with the next seed; an exception raised by
a checker (service outage, bad reply) aborts the run instead of letting an
asset through unchecked.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .errors import InputError, ServiceError
from .mesh import validate_mesh
from .rasterizer import orthogonal_view_set, rasterize, render_shaded, framing_radius
from .services import JsonServiceClient, b64_png

log = logging.getLogger(__name__)


@dataclass
class CheckReport:
    checker: str
    passed: bool
    score: float | None = None
    reasons: list = field(default_factory=list)

    def __post_init__(self):
        if not self.passed and not self.reasons:
            raise ValueError("a failed check must give at least one reason")

    def to_dict(self):
        return {"checker": self.checker, "passed": self.passed, "score": self.score, "reasons": list(self.reasons)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["checker"], bool(d["passed"]), d.get("score"), list(d.get("reasons", [])))


# -- services ---------------------------------------------------------------


class ScoreService:
    """Remote aesthetic scorer: {images, task} -> {"score": number}."""

    def __init__(self, client):
        self.client = client

    def score(self, image):
        reply = self.client.post({"images": [b64_png(image)], "task": "aesthetic"})
        value = reply.get("score")
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ServiceError(f"score service returned no numeric score: {reply!r}", diagnostics={"reply": reply})
        return float(value)


class VlmService:
    """Remote visual verdict: {images, task, prompt} -> {"passed": bool, "reason": str}."""

    def __init__(self, client):
        self.client = client

    def assess(self, images, task, prompt=""):
        reply = self.client.post({"images": [b64_png(im) for im in images], "task": task, "prompt": prompt})
        passed = reply.get("passed")
        if not isinstance(passed, bool):
            raise ServiceError(f"verdict service returned no boolean 'passed': {reply!r}", diagnostics={"reply": reply})
        reason = reply.get("reason") or ""
        if not isinstance(reason, str):
            raise ServiceError("verdict 'reason' must be text", diagnostics={"reply": reply})
        return passed, reason


def vlm_from_config(cfg):
    cfg = cfg or {}
    if cfg.get("mode", "offline") == "offline":
        return None
    if not cfg.get("endpoint"):
        raise InputError("service checker needs an 'endpoint'")
    return JsonServiceClient(cfg["endpoint"], cfg.get("api_key_env"), cfg.get("timeout", 30.0), cfg.get("retries", 1))


# -- checkers -----------------------------------------------------------------


def texture_richness(image):
    """Mean gradient magnitude of luminance, mapped to [0, 10].

    Differences wrap around the image border, so circular shifts leave the
    score unchanged. A one-pixel checkerboard scores 10.
    """
    img = np.asarray(image, dtype=np.float64)
    lum = img[..., :3] @ np.array([0.299, 0.587, 0.114]) if img.ndim == 3 else img
    gx = np.roll(lum, -1, axis=1) - lum
    gy = np.roll(lum, -1, axis=0) - lum
    return float(min(10.0, 10.0 * np.hypot(gx, gy).mean() / math.sqrt(2.0)))


def aesthetic_check(image, threshold=0.0, scorer=None):
    score = scorer.score(image) if scorer is not None else texture_richness(image)
    passed = score >= threshold
    reasons = [] if passed else [f"aesthetic score {score:.3f} below threshold {threshold:g}"]
    return CheckReport("aesthetic", passed, score, reasons)


SEG_MIN_COVERAGE = 0.05
SEG_MAX_COVERAGE = 0.98


def seg_check(image_with_alpha, checker=None, min_coverage=SEG_MIN_COVERAGE, max_coverage=SEG_MAX_COVERAGE):
    """Foreground extraction quality of an RGBA image."""
    img = np.asarray(image_with_alpha, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 4:
        raise InputError("segmentation check needs an image with an alpha channel")
    if checker is not None:
        passed, reason = checker.assess([img], "segmentation", "Is the foreground cleanly and completely extracted?")
        return CheckReport("segmentation", passed, None, [] if passed else [reason or "rejected by service"])

    fg = img[..., 3] > 0.5
    coverage = float(fg.mean())
    reasons = []
    if coverage == 0:
        reasons.append("empty foreground")
    elif coverage < min_coverage:
        reasons.append(f"foreground too small ({coverage:.1%})")
    elif coverage > max_coverage:
        reasons.append(f"foreground fills the frame ({coverage:.1%})")
    touched = sum(bool(edge.any()) for edge in (fg[0], fg[-1], fg[:, 0], fg[:, -1]))
    if touched >= 2:
        reasons.append("border truncation")
    return CheckReport("segmentation", not reasons, coverage, reasons)


def inspection_views(mesh, resolution=(256, 256)):
    """Shaded renders from the four orthogonal side views, framed to fit."""
    cams = orthogonal_view_set(resolution=resolution)
    radius = framing_radius(mesh, cams[0].fov_y)
    out = []
    for cam in cams:
        cam = type(cam)(cam.elevation, cam.azimuth, radius, cam.fov_y, cam.resolution)
        out.append(render_shaded(mesh, cam, rasterize(mesh, cam)))
    return out


def geo_check(mesh, checker=None, max_components=3, max_degenerate_fraction=0.01):
    """Geometric completeness. Offline: topology rules; service: verdict on four renders."""
    if checker is not None:
        views = inspection_views(mesh)
        passed, reason = checker.assess(views, "geometry", "Is the object geometrically complete and plausible?")
        return CheckReport("geometry", passed, None, [] if passed else [reason or "rejected by service"])
    report = validate_mesh(mesh)
    reasons = []
    if not report.watertight:
        reasons.append("not watertight")
    if report.connected_components > max_components:
        reasons.append(f"too many components ({report.connected_components} > {max_components})")
    if report.degenerate_face_fraction > max_degenerate_fraction:
        reasons.append(f"too many degenerate faces ({report.degenerate_face_fraction:.2%})")
    return CheckReport("geometry", not reasons, None, reasons)


# -- retry orchestration ------------------------------------------------------


@dataclass
class Stage:
    """One generation step.

    ``generator(seed, settings, upstream)`` produces the stage output from
    the outputs of earlier stages (a dict keyed by stage name). Each
    checker maps the output to a CheckReport. ``settings(attempt)`` yields
    the adjusted settings for a retry.
    """

    name: str
    generator: Callable[[int, dict, dict], Any]
    checkers: list = field(default_factory=list)
    settings: Callable[[int], dict] | None = None


@dataclass(frozen=True)
class SeedPolicy:
    base_seed: int = 0

    def seed(self, attempt):
        return self.base_seed + attempt


@dataclass
class Attempt:
    index: int
    seed: int
    settings: dict
    reports: list
    error: str | None = None

    @property
    def passed(self):
        return self.error is None and all(r.passed for r in self.reports)

    def to_dict(self):
        return {
            "index": self.index,
            "seed": self.seed,
            "settings": self.settings,
            "reports": [r.to_dict() for r in self.reports],
            "error": self.error,
            "passed": self.passed,
        }


ACCEPTED, REJECTED, IN_PROGRESS = "accepted", "rejected", "in_progress"


@dataclass
class PipelineRun:
    stages: list
    max_retries: int
    attempts: dict = field(default_factory=dict)
    status: str = IN_PROGRESS
    outputs: dict = field(default_factory=dict, repr=False)

    def history(self):
        """Serializable record of every attempt; excludes stage outputs."""
        return {
            "status": self.status,
            "max_retries": self.max_retries,
            "stages": list(self.stages),
            "attempts": {name: [a.to_dict() for a in self.attempts.get(name, [])] for name in self.stages},
        }

    def final_reports(self):
        return [r for name in self.stages for r in (self.attempts[name][-1].reports if self.attempts.get(name) else [])]

    def summary_lines(self):
        lines = [f"status: {self.status}"]
        for name in self.stages:
            for a in self.attempts.get(name, []):
                verdict = "pass" if a.passed else "FAIL"
                why = "; ".join([a.error] if a.error else [x for r in a.reports for x in r.reasons])
                lines.append(f"  {name} attempt {a.index} seed {a.seed}: {verdict}" + (f" ({why})" if why else ""))
        return lines


def run_pipeline(stages, max_retries=2, seed_policy=None):
    """Run stages in order, re-running a failing stage with the next seed.

    A stage gets at most ``max_retries + 1`` attempts; exhausting them
    rejects the run. Generator exceptions count as failed attempts, except
    :class:`ServiceError`, which aborts.
    """
    if not stages:
        raise InputError("pipeline needs at least one stage")
    if max_retries < 0:
        raise InputError("max_retries must be >= 0")
    if seed_policy is None or isinstance(seed_policy, int):
        seed_policy = SeedPolicy(seed_policy or 0)
    run = PipelineRun([s.name for s in stages], max_retries)
    for stage in stages:
        history = run.attempts.setdefault(stage.name, [])
        for attempt in range(max_retries + 1):
            seed = seed_policy.seed(attempt)
            settings = dict(stage.settings(attempt)) if stage.settings else {"attempt": attempt}
            try:
                output = stage.generator(seed, settings, run.outputs)
            except ServiceError:
                raise
            except Exception as exc:
                log.warning("stage %s attempt %d raised %s", stage.name, attempt, exc)
                history.append(Attempt(attempt, seed, settings, [], f"generator error: {type(exc).__name__}: {exc}"))
                continue
            reports = [check(output) for check in stage.checkers]
            record = Attempt(attempt, seed, settings, reports)
            history.append(record)
            if record.passed:
                run.outputs[stage.name] = output
                break
            log.info("stage %s attempt %d failed: %s", stage.name, attempt, [r.reasons for r in reports])
        else:
            run.status = REJECTED
            return run
    run.status = ACCEPTED
    return run


# -- evaluation harness ---------------------------------------------------------


@dataclass(frozen=True)
class EvalResult:
    """Confusion counts with "unusable" as the positive class."""

    true_positives: int
    false_positives: int
    false_negatives: int
    true_negatives: int
    precision: float
    recall: float
    precision_defined: bool = True
    recall_defined: bool = True

    @property
    def total(self):
        return self.true_positives + self.false_positives + self.false_negatives + self.true_negatives

    def to_dict(self):
        return {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "true_negatives": self.true_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "precision_defined": self.precision_defined,
            "recall_defined": self.recall_defined,
        }


def evaluate_checkers(predictions, labels):
    """Precision and recall of unusable-asset flags against ground truth.

    Undefined ratios (no predicted or no actual positives) are reported as
    0 with the matching ``*_defined`` flag cleared.
    """
    pred = np.asarray(predictions, dtype=bool).reshape(-1)
    truth = np.asarray(labels, dtype=bool).reshape(-1)
    if pred.size == 0:
        raise InputError("no assets to evaluate")
    if pred.shape != truth.shape:
        raise InputError(f"{pred.size} predictions for {truth.size} labels")
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    p_def, r_def = tp + fp > 0, tp + fn > 0
    return EvalResult(
        tp, fp, fn, tn,
        precision=tp / (tp + fp) if p_def else 0.0,
        recall=tp / (tp + fn) if r_def else 0.0,
        precision_defined=p_def,
        recall_defined=r_def,
    )


def _read_jsonl(path):
    rows = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{n}: malformed JSON: {exc}") from None
        if not isinstance(row, dict) or "asset_id" not in row:
            raise InputError(f"{path}:{n}: expected an object with 'asset_id'")
        rows.append(row)
    return rows


def _flag(row, key, where):
    value = row.get(key)
    if not isinstance(value, bool):
        raise InputError(f"{where}: '{key}' must be true/false, got {value!r}")
    return value


def load_eval_records(predictions_path, labels_path=None):
    """Read JSONL of {asset_id, predicted_unusable, label_unusable}.

    With ``labels_path``, labels come from that file joined on asset_id.
    """
    preds = _read_jsonl(predictions_path)
    if not preds:
        raise InputError(f"{predictions_path}: no records")
    ids = [r["asset_id"] for r in preds]
    if len(set(ids)) != len(ids):
        raise InputError(f"{predictions_path}: duplicate asset_id")
    p = [_flag(r, "predicted_unusable", f"{predictions_path} ({r['asset_id']})") for r in preds]
    if labels_path is None:
        y = [_flag(r, "label_unusable", f"{predictions_path} ({r['asset_id']})") for r in preds]
    else:
        lab = {r["asset_id"]: r for r in _read_jsonl(labels_path)}
        missing = [i for i in ids if i not in lab]
        if missing:
            raise InputError(f"{labels_path}: no label for asset(s) {missing[:5]}")
        y = [_flag(lab[i], "label_unusable", f"{labels_path} ({i})") for i in ids]
    return ids, p, y
