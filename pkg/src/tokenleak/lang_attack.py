"""Language-recovery attack over (token density, output/input ratio).

Profiling fits one bivariate Gaussian per target language from labeled
observations; the attack fits the same statistic on a small sample set and
returns the label of the closest profile under the Gaussian Bhattacharyya
distance. Either feature can be masked out to measure its individual
contribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from tokenleak.seeding import rng_for
from tokenleak.trace import ObservationRecord, Trace, derive_features

PROFILE_FORMAT_TAG = "tokenleak-profile2d/1"

FEATURES = ("both", "density", "ratio")


def feature_matrix(records: list[ObservationRecord]) -> np.ndarray:
    """(n, 2) array of (token_density, io_ratio)."""
    rows = []
    for rec in records:
        f = derive_features(rec)
        rows.append((f.token_density, f.io_ratio))
    return np.asarray(rows, dtype=float)


def _mask_index(feature: str) -> slice:
    if feature == "both":
        return slice(0, 2)
    if feature == "density":
        return slice(0, 1)
    if feature == "ratio":
        return slice(1, 2)
    raise ValueError(f"feature must be one of {FEATURES}, got {feature!r}")


def regularize(cov: np.ndarray) -> np.ndarray:
    """Add a small diagonal ridge so covariances are strictly positive definite."""
    eps = max(1e-9, 1e-6 * float(np.mean(np.abs(np.diag(cov)))))
    return cov + eps * np.eye(cov.shape[0])


@dataclass(frozen=True)
class ClassProfile2D:
    """Fitted Gaussian over the two features for one label."""

    label: str
    mean: np.ndarray
    cov: np.ndarray
    sample_count: int

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        if not np.allclose(cov, cov.T):
            raise ValueError(f"profile {self.label!r}: covariance must be symmetric")
        if self.sample_count < 2:
            raise ValueError(f"profile {self.label!r}: sample_count must be >= 2")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def masked(self, feature: str) -> tuple[np.ndarray, np.ndarray]:
        idx = _mask_index(feature)
        return self.mean[idx], self.cov[idx, idx]


@dataclass(frozen=True)
class ProfileSet:
    model_name: str
    source_language: str
    profiles: dict[str, ClassProfile2D] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.profiles) < 2:
            raise ValueError("a profile set needs at least 2 labels")
        for label, p in self.profiles.items():
            if p.label != label:
                raise ValueError(f"profile key {label!r} != profile.label {p.label!r}")

    def labels(self) -> list[str]:
        return sorted(self.profiles)


def fit_profile(records: list[ObservationRecord], diagonal: bool = False) -> ClassProfile2D:
    """Mean and unbiased sample covariance of the derived features.

    All records must share one label and carry (possibly estimated) token
    counts; the covariance gets a small diagonal ridge.
    """
    if len(records) < 2:
        raise ValueError("need at least 2 records to fit a profile")
    labels = {r.label for r in records}
    if len(labels) != 1:
        raise ValueError(f"records carry mixed labels: {sorted(map(str, labels))}")
    label = records[0].label
    if label is None:
        raise ValueError("profiling records must be labeled")
    x = feature_matrix(records)
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (len(records) - 1)
    if diagonal:
        cov = np.diag(np.diag(cov))
    return ClassProfile2D(
        label=label, mean=mean, cov=regularize(cov), sample_count=len(records)
    )


def fit_profile_set(
    trace: Trace, model_name: str = "", source_language: str = "", diagonal: bool = False
) -> ProfileSet:
    profiles = {
        label: fit_profile(trace.by_label(label), diagonal=diagonal)
        for label in trace.labels()
    }
    return ProfileSet(model_name=model_name, source_language=source_language, profiles=profiles)


def gaussian_bhattacharyya(
    mean1: np.ndarray, cov1: np.ndarray, mean2: np.ndarray, cov2: np.ndarray
) -> float:
    """Closed-form Bhattacharyya distance between two Gaussians (1D or 2D).

    Uses the log-determinant form, which is exactly 0 for identical
    parameters.
    """
    m1 = np.atleast_1d(np.asarray(mean1, dtype=float))
    m2 = np.atleast_1d(np.asarray(mean2, dtype=float))
    c1 = np.atleast_2d(np.asarray(cov1, dtype=float))
    c2 = np.atleast_2d(np.asarray(cov2, dtype=float))
    cbar = (c1 + c2) / 2.0
    d = m1.shape[0]
    if d == 1:
        det1, det2, detbar = c1[0, 0], c2[0, 0], cbar[0, 0]
        if detbar <= 0 or det1 <= 0 or det2 <= 0:
            raise ValueError("covariances must be positive definite")
        dm = m1[0] - m2[0]
        quad = dm * dm / detbar
    else:
        det1 = c1[0, 0] * c1[1, 1] - c1[0, 1] * c1[1, 0]
        det2 = c2[0, 0] * c2[1, 1] - c2[0, 1] * c2[1, 0]
        detbar = cbar[0, 0] * cbar[1, 1] - cbar[0, 1] * cbar[1, 0]
        if detbar <= 0 or det1 <= 0 or det2 <= 0:
            raise ValueError("covariances must be positive definite")
        dm = m1 - m2
        # explicit 2x2 inverse applied to the mean difference
        quad = (
            cbar[1, 1] * dm[0] * dm[0]
            - (cbar[0, 1] + cbar[1, 0]) * dm[0] * dm[1]
            + cbar[0, 0] * dm[1] * dm[1]
        ) / detbar
    return 0.125 * float(quad) + 0.5 * (
        math.log(detbar) - 0.5 * (math.log(det1) + math.log(det2))
    )


def bhattacharyya(p: ClassProfile2D, q: ClassProfile2D, feature: str = "both") -> float:
    mp, cp = p.masked(feature)
    mq, cq = q.masked(feature)
    return gaussian_bhattacharyya(mp, cp, mq, cq)


def _log_density(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    d = mean.shape[0]
    dm = x - mean
    if d == 1:
        det = cov[0, 0]
        quad = dm[0] * dm[0] / det
    else:
        det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
        quad = (
            cov[1, 1] * dm[0] * dm[0]
            - (cov[0, 1] + cov[1, 0]) * dm[0] * dm[1]
            + cov[0, 0] * dm[1] * dm[1]
        ) / det
    if det <= 0:
        raise ValueError("covariance must be positive definite")
    return -0.5 * (float(quad) + math.log(det) + d * math.log(2.0 * math.pi))


def predict_language(
    profiles: ProfileSet, samples: list[ObservationRecord], feature: str = "both"
) -> str:
    """Label of the profile closest to the sample set.

    With two or more samples a Gaussian is fitted on them and matched by
    Bhattacharyya distance. A single sample has no covariance, so it is
    scored by log-density under each profile instead. Ties break to the
    lexicographically smallest label.
    """
    if not samples:
        raise ValueError("empty sample set")
    if len(samples) > 50:
        raise ValueError("attack predictions use at most 50 samples")
    x = feature_matrix(samples)
    idx = _mask_index(feature)
    if len(samples) == 1:
        point = x[0][idx]
        best_label, best_score = None, -math.inf
        for label in sorted(profiles.profiles):
            m, c = profiles.profiles[label].masked(feature)
            score = _log_density(point, m, np.atleast_2d(c))
            if score > best_score:
                best_label, best_score = label, score
        return best_label
    mean = x.mean(axis=0)
    centered = x - mean
    cov = regularize(centered.T @ centered / (len(samples) - 1))
    best_label, best_dist = None, math.inf
    for label in sorted(profiles.profiles):
        m, c = profiles.profiles[label].masked(feature)
        d = gaussian_bhattacharyya(mean[idx], cov[idx, idx], m, c)
        if d < best_dist:
            best_label, best_dist = label, d
    return best_label


@dataclass(frozen=True)
class AsrResult:
    """Per-label precision of the attacker's predictions plus the macro average."""

    per_label: dict[str, float]
    average: float
    confusion: dict[str, dict[str, int]]
    samples_per_prediction: int
    feature: str

    def to_obj(self) -> dict:
        return {
            "per_label": self.per_label,
            "average": self.average,
            "confusion": self.confusion,
            "samples_per_prediction": self.samples_per_prediction,
            "feature": self.feature,
        }


def evaluate_asr(
    profiles: ProfileSet,
    test_trace: Trace,
    samples_per_prediction: int,
    predictions_per_label: int = 50,
    feature: str = "both",
    seed: int = 0,
) -> AsrResult:
    """Monte Carlo attack-success-rate over a labeled test trace.

    For every true label, runs `predictions_per_label` independent
    predictions, each on `samples_per_prediction` records drawn from that
    label's test records. Reports precision per predicted label (true
    positives over predictions of that label; 0 when never predicted) and
    the macro average over the profile labels.
    """
    if not 1 <= samples_per_prediction <= 50:
        raise ValueError("samples_per_prediction must lie in 1..50")
    labels = profiles.labels()
    confusion: dict[str, dict[str, int]] = {t: {p: 0 for p in labels} for t in labels}
    for true_label in labels:
        pool = test_trace.by_label(true_label)
        if not pool:
            raise ValueError(f"test trace has no records for label {true_label!r}")
        for p in range(predictions_per_label):
            rng = rng_for(seed, "asr", true_label, p)
            k = samples_per_prediction
            idx = rng.choice(len(pool), size=k, replace=k > len(pool))
            picked = [pool[i] for i in idx]
            pred = predict_language(profiles, picked, feature=feature)
            confusion[true_label][pred] += 1
    per_label: dict[str, float] = {}
    for pred_label in labels:
        predicted = sum(confusion[t][pred_label] for t in labels)
        correct = confusion[pred_label][pred_label]
        per_label[pred_label] = correct / predicted if predicted else 0.0
    average = sum(per_label.values()) / len(labels)
    return AsrResult(
        per_label=per_label,
        average=average,
        confusion=confusion,
        samples_per_prediction=samples_per_prediction,
        feature=feature,
    )


def save_profile_set(profiles: ProfileSet, path: str) -> None:
    lines = [
        json.dumps(
            {
                "format": PROFILE_FORMAT_TAG,
                "model": profiles.model_name,
                "source_language": profiles.source_language,
            }
        )
    ]
    for label in profiles.labels():
        p = profiles.profiles[label]
        lines.append(
            json.dumps(
                {
                    "label": label,
                    "mean": [float(v) for v in p.mean],
                    "cov": [float(v) for v in p.cov.reshape(4)],
                    "sample_count": p.sample_count,
                }
            )
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_profile_set(path: str) -> ProfileSet:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty profile file")
    header = json.loads(lines[0])
    if not isinstance(header, dict) or header.get("format") != PROFILE_FORMAT_TAG:
        raise ValueError(f"{path}: bad profile header")
    profiles: dict[str, ClassProfile2D] = {}
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        obj = json.loads(line)
        label = obj["label"]
        if label in profiles:
            raise ValueError(f"{path}: line {i}: duplicate label {label!r}")
        profiles[label] = ClassProfile2D(
            label=label,
            mean=np.asarray(obj["mean"], dtype=float),
            cov=np.asarray(obj["cov"], dtype=float).reshape(2, 2),
            sample_count=int(obj["sample_count"]),
        )
    return ProfileSet(
        model_name=header.get("model", ""),
        source_language=header.get("source_language", ""),
        profiles=profiles,
    )
