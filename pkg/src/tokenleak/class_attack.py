"""Class-recovery attack via an input-length-aware token-count threshold.

The attacker fits `tokens > alpha * input_bytes + beta` on labeled
observations, scoring candidates by a balance-penalized average precision,
then predicts the output class of unlabeled requests. Also houses the
planted two-class task generator used by the benchmarks and by the
few-shot-bias transforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from tokenleak._kernels import threshold_sweep
from tokenleak.density import InputSampler, round_half_up
from tokenleak.seeding import rng_for
from tokenleak.trace import ObservationRecord, Trace

THRESHOLD_FORMAT_TAG = "tokenleak-threshold/1"
TASK_FORMAT_TAG = "tokenleak-task/1"

BIAS_SHIFTS = ("augmenting", "diminishing", "unbiased")


def optimal_asr(prec1: float, prec2: float, theta: float = 0.5) -> float:
    """Average precision penalized by the precision gap between classes."""
    for p in (prec1, prec2):
        if not 0.0 <= p <= 1.0:
            raise ValueError("precisions must lie in [0, 1]")
    return 0.5 * (prec1 + prec2) - theta * abs(prec1 - prec2)


@dataclass(frozen=True)
class ThresholdProfile:
    """Fitted linear separator; the class above the threshold is labels[1]."""

    task: str
    labels: tuple[str, str]
    alpha: float
    beta: float
    theta: float
    train_precisions: tuple[float, float]
    train_asr: float

    def __post_init__(self) -> None:
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        if len(self.labels) != 2 or self.labels[0] == self.labels[1]:
            raise ValueError("need exactly 2 distinct labels")
        for p in self.train_precisions:
            if not 0.0 <= p <= 1.0:
                raise ValueError("train precisions must lie in [0, 1]")


def candidate_alphas(
    inputs: np.ndarray, tokens: np.ndarray, is_second: np.ndarray
) -> np.ndarray:
    """All slopes at which the sweep's score function can change, ordered by
    (|alpha|, alpha) for the tie-break.

    The 0/1 objective is piecewise constant in alpha with breakpoints only
    at slopes through cross-class point pairs, so the candidates are those
    slopes plus one probe inside every plateau between them (at a breakpoint
    itself the crossing pair is tied and cannot be separated, so the
    midpoints are not redundant), plus 0.
    """
    l1 = inputs[~is_second]
    t1 = tokens[~is_second]
    l2 = inputs[is_second]
    t2 = tokens[is_second]
    dl = l1[:, None] - l2[None, :]
    dt = t1[:, None] - t2[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = np.where(dl != 0, dt / dl, np.nan).ravel()
    slopes = slopes[np.isfinite(slopes)]
    breaks = np.unique(np.concatenate((slopes, [0.0])))
    cands = np.unique(
        np.concatenate(
            (breaks, (breaks[:-1] + breaks[1:]) / 2.0, [breaks[0] - 1.0, breaks[-1] + 1.0])
        )
    )
    order = np.lexsort((cands, np.abs(cands)))
    return cands[order]


def fit_threshold(
    records: list[ObservationRecord], theta: float = 0.5, task: str = ""
) -> ThresholdProfile:
    """Sweep data-induced (alpha, beta) candidates for the best optimal ASR.

    Candidate slopes come from cross-class point differences (the 0/1
    objective can only change where the separating line crosses a data
    point); both label orientations are tried and the better one kept.
    """
    labels = sorted({r.label for r in records if r.label is not None})
    if len({r.label for r in records}) != 2 or len(labels) != 2:
        raise ValueError("training records must carry exactly 2 labels")
    inputs = np.array([float(r.input_bytes) for r in records])
    tokens = np.array([float(_tokens(r)) for r in records])
    counts = {lab: sum(1 for r in records if r.label == lab) for lab in labels}
    if min(counts.values()) < 2:
        raise ValueError("need at least 2 records per class")

    best: Optional[ThresholdProfile] = None
    for ordered in (tuple(labels), (labels[1], labels[0])):
        is_second = np.array([r.label == ordered[1] for r in records], dtype=bool)
        alphas = candidate_alphas(inputs, tokens, is_second)
        alpha, beta, p1, p2, score = threshold_sweep(
            inputs, tokens, is_second.astype(np.uint8), alphas, theta
        )
        prof = ThresholdProfile(
            task=task,
            labels=ordered,
            alpha=alpha,
            beta=beta,
            theta=theta,
            train_precisions=(p1, p2),
            train_asr=score,
        )
        if best is None or prof.train_asr > best.train_asr:
            best = prof
    return best


def predict_class(profile: ThresholdProfile, rec: ObservationRecord) -> str:
    """labels[1] iff tokens strictly exceed the threshold line."""
    n = _tokens(rec)
    above = n > profile.alpha * rec.input_bytes + profile.beta
    return profile.labels[1] if above else profile.labels[0]


def _tokens(rec: ObservationRecord) -> int:
    if rec.output_tokens is None:
        raise ValueError(
            f"record {rec.id!r}: output_tokens absent; run timing-recovery "
            "estimation first"
        )
    return rec.output_tokens


@dataclass(frozen=True)
class ClassAsrResult:
    per_class: dict[str, float]
    average: float
    confusion: dict[str, dict[str, int]]

    def to_obj(self) -> dict:
        return {
            "per_class": self.per_class,
            "average": self.average,
            "confusion": self.confusion,
        }


def evaluate_class_asr(profile: ThresholdProfile, trace: Trace) -> ClassAsrResult:
    """Per-class precision of threshold predictions over a labeled trace."""
    labels = list(profile.labels)
    confusion = {t: {p: 0 for p in labels} for t in labels}
    for rec in trace:
        if rec.label not in confusion:
            raise ValueError(f"record {rec.id!r}: label {rec.label!r} not in profile")
        confusion[rec.label][predict_class(profile, rec)] += 1
    per_class = {}
    for pred in labels:
        total = sum(confusion[t][pred] for t in labels)
        per_class[pred] = confusion[pred][pred] / total if total else 0.0
    average = sum(per_class.values()) / 2.0
    return ClassAsrResult(per_class=per_class, average=average, confusion=confusion)


@dataclass(frozen=True)
class FixedLengthRule:
    """Prompt-level defense stand-in: replace the token count with a draw
    centered at a target, with the given per-record compliance probability."""

    target_tokens: float
    compliance: float
    sd: float = 5.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.compliance <= 1.0:
            raise ValueError("compliance must lie in [0, 1]")


@dataclass(frozen=True)
class TaskModel:
    """Planted two-class task: tokens = slope * input_bytes + offset + noise."""

    task: str
    labels: tuple[str, str]
    slope: float
    offsets: tuple[float, float]
    noise_sd: float
    bytes_per_token: float = 4.0
    fixed_length: Optional[FixedLengthRule] = None

    def __post_init__(self) -> None:
        if len(self.labels) != 2 or self.labels[0] == self.labels[1]:
            raise ValueError("need exactly 2 distinct labels")
        if self.noise_sd < 0 or self.bytes_per_token <= 0:
            raise ValueError("noise_sd must be >= 0 and bytes_per_token > 0")

    @property
    def gap(self) -> float:
        return self.offsets[1] - self.offsets[0]


def bias_transform(model: TaskModel, shift: str, magnitude: float = 0.5) -> TaskModel:
    """Move the class offsets apart (augmenting) or together (diminishing).

    The shift is symmetric around the offset midpoint and proportional to
    the inherent gap; `diminishing` with magnitude > 1 crosses over.
    """
    if shift not in BIAS_SHIFTS:
        raise ValueError(f"shift must be one of {BIAS_SHIFTS}")
    if magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    if shift == "unbiased":
        return model
    factor = 1.0 + magnitude if shift == "augmenting" else 1.0 - magnitude
    center = (model.offsets[0] + model.offsets[1]) / 2.0
    half = model.gap * factor / 2.0
    return replace(model, offsets=(center - half, center + half))


def synth_task_trace(
    model: TaskModel,
    per_class: int,
    input_sampler,
    seed: int,
    mode: str = "streaming",
    t_start: float = 0.0,
    send_interval: float = 1.0,
    id_prefix: str = "",
) -> Trace:
    """Labeled two-class trace drawn from the planted task model."""
    if per_class < 1:
        raise ValueError("per_class must be positive")
    sampler = InputSampler.from_spec(input_sampler)
    records = []
    for c, label in enumerate(model.labels):
        rng = rng_for(seed, "task", model.task, label)
        lengths = sampler.sample(rng, per_class)
        noise = rng.normal(0.0, model.noise_sd, per_class) if model.noise_sd > 0 else np.zeros(per_class)
        if model.fixed_length is not None:
            hit = rng.random(per_class) < model.fixed_length.compliance
            fixed = rng.normal(
                model.fixed_length.target_tokens, model.fixed_length.sd, per_class
            )
        for i in range(per_class):
            l_in = int(lengths[i])
            n = model.slope * l_in + model.offsets[c] + noise[i]
            if model.fixed_length is not None and hit[i]:
                n = fixed[i]
            n_tok = max(1, round_half_up(n))
            records.append(
                ObservationRecord(
                    id=f"{id_prefix}{model.task}-{label}-{i:05d}",
                    label=label,
                    input_bytes=l_in,
                    output_bytes=max(0, round_half_up(n_tok * model.bytes_per_token)),
                    output_tokens=n_tok,
                    t_send=t_start + (2 * i + c) * send_interval,
                )
            )
    records.sort(key=lambda r: (r.t_send, r.id))
    return Trace(mode=mode, records=tuple(records))


def select_best_profile(candidates: list[ThresholdProfile]) -> ThresholdProfile:
    """Day-level selection: the profile with the best training optimal ASR."""
    if not candidates:
        raise ValueError("no candidate profiles")
    best = candidates[0]
    for prof in candidates[1:]:
        if prof.train_asr > best.train_asr:
            best = prof
    return best


def save_threshold(profile: ThresholdProfile, path: str) -> None:
    obj = {
        "format": THRESHOLD_FORMAT_TAG,
        "task": profile.task,
        "labels": list(profile.labels),
        "alpha": profile.alpha,
        "beta": profile.beta,
        "theta": profile.theta,
        "train_precisions": list(profile.train_precisions),
        "train_asr": profile.train_asr,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def load_threshold(path: str) -> ThresholdProfile:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict) or obj.get("format") != THRESHOLD_FORMAT_TAG:
        raise ValueError(f"{path}: bad threshold profile header")
    return ThresholdProfile(
        task=obj["task"],
        labels=tuple(obj["labels"]),
        alpha=float(obj["alpha"]),
        beta=float(obj["beta"]),
        theta=float(obj["theta"]),
        train_precisions=tuple(obj["train_precisions"]),
        train_asr=float(obj["train_asr"]),
    )


def save_task_model(model: TaskModel, path: str) -> None:
    obj = {
        "format": TASK_FORMAT_TAG,
        "task": model.task,
        "labels": list(model.labels),
        "slope": model.slope,
        "offsets": list(model.offsets),
        "noise_sd": model.noise_sd,
        "bytes_per_token": model.bytes_per_token,
        "fixed_length": None
        if model.fixed_length is None
        else {
            "target_tokens": model.fixed_length.target_tokens,
            "compliance": model.fixed_length.compliance,
            "sd": model.fixed_length.sd,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def load_task_model(path: str) -> TaskModel:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict) or obj.get("format") != TASK_FORMAT_TAG:
        raise ValueError(f"{path}: bad task model header")
    fl = obj.get("fixed_length")
    return TaskModel(
        task=obj["task"],
        labels=tuple(obj["labels"]),
        slope=float(obj["slope"]),
        offsets=tuple(float(v) for v in obj["offsets"]),
        noise_sd=float(obj["noise_sd"]),
        bytes_per_token=float(obj.get("bytes_per_token", 4.0)),
        fixed_length=None
        if fl is None
        else FixedLengthRule(
            target_tokens=float(fl["target_tokens"]),
            compliance=float(fl["compliance"]),
            sd=float(fl.get("sd", 5.0)),
        ),
    )
