"""Per-language feature distributions and synthetic trace generation.

A `DensityModel` is the generative counterpart of the profiling phase: for
each language it holds the (bytes/token, output/input ratio) means, spreads,
and their correlation, from which labeled observation traces are drawn
without any LLM in the loop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from tokenleak.seeding import rng_for
from tokenleak.trace import ObservationRecord, Trace

DENSITY_FORMAT_TAG = "tokenleak-density/1"


@dataclass(frozen=True)
class LanguageParams:
    mean_density: float
    sd_density: float
    mean_ratio: float
    sd_ratio: float
    corr: float = 0.0

    def __post_init__(self) -> None:
        if self.sd_density < 0 or self.sd_ratio < 0:
            raise ValueError("sd values must be >= 0")
        if not -1.0 <= self.corr <= 1.0:
            raise ValueError("corr must lie in [-1, 1]")

    def covariance(self) -> np.ndarray:
        off = self.corr * self.sd_density * self.sd_ratio
        return np.array(
            [[self.sd_density**2, off], [off, self.sd_ratio**2]], dtype=float
        )


@dataclass(frozen=True)
class DensityModel:
    languages: dict[str, LanguageParams] = field(default_factory=dict)
    floor: float = 0.1

    def __post_init__(self) -> None:
        if self.floor <= 0:
            raise ValueError("truncation floor must be > 0")

    def names(self) -> list[str]:
        return list(self.languages)


@dataclass(frozen=True)
class InputSampler:
    """Input byte-length distribution: fixed | uniform | normal (floored at 1)."""

    kind: str
    params: tuple[float, ...]

    @staticmethod
    def fixed(value: int) -> "InputSampler":
        return InputSampler("fixed", (float(value),))

    @staticmethod
    def uniform(low: int, high: int) -> "InputSampler":
        if low > high:
            raise ValueError("uniform sampler needs low <= high")
        return InputSampler("uniform", (float(low), float(high)))

    @staticmethod
    def normal(mean: float, sd: float) -> "InputSampler":
        return InputSampler("normal", (mean, sd))

    @staticmethod
    def from_spec(spec) -> "InputSampler":
        if isinstance(spec, InputSampler):
            return spec
        if isinstance(spec, int):
            return InputSampler.fixed(spec)
        if isinstance(spec, dict):
            kind = spec.get("kind")
            if kind == "fixed":
                return InputSampler.fixed(int(spec["value"]))
            if kind == "uniform":
                return InputSampler.uniform(int(spec["low"]), int(spec["high"]))
            if kind == "normal":
                return InputSampler.normal(float(spec["mean"]), float(spec["sd"]))
        raise ValueError(f"bad input sampler spec: {spec!r}")

    def to_spec(self) -> dict:
        if self.kind == "fixed":
            return {"kind": "fixed", "value": int(self.params[0])}
        if self.kind == "uniform":
            return {"kind": "uniform", "low": int(self.params[0]), "high": int(self.params[1])}
        return {"kind": "normal", "mean": self.params[0], "sd": self.params[1]}

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "fixed":
            out = np.full(size, self.params[0])
        elif self.kind == "uniform":
            out = rng.integers(int(self.params[0]), int(self.params[1]) + 1, size).astype(float)
        elif self.kind == "normal":
            out = rng.normal(self.params[0], self.params[1], size)
        else:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        return np.maximum(1, np.rint(out)).astype(int)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def synth_trace(
    model: DensityModel,
    language: str,
    count: int,
    input_sampler,
    seed: int,
    mode: str = "streaming",
    t_start: float = 0.0,
    send_interval: float = 1.0,
    id_prefix: str | None = None,
) -> Trace:
    """Draw `count` labeled records for one language.

    (density, ratio) pairs come from the language's correlated bivariate
    Gaussian, truncated below at `model.floor`; byte lengths and token
    counts follow by rounding. Reproducible for a fixed seed.
    """
    if language not in model.languages:
        raise ValueError(f"unknown language {language!r}")
    if count < 1:
        raise ValueError("count must be positive")
    params = model.languages[language]
    sampler = InputSampler.from_spec(input_sampler)
    rng = rng_for(seed, "synth", language)
    mean = np.array([params.mean_density, params.mean_ratio])
    draws = rng.multivariate_normal(mean, params.covariance(), size=count)
    draws = np.maximum(draws, model.floor)
    input_lengths = sampler.sample(rng, count)
    prefix = id_prefix if id_prefix is not None else language
    records = []
    for i in range(count):
        density, ratio = draws[i]
        l_in = int(input_lengths[i])
        l_out = round_half_up(ratio * l_in)
        n_tok = max(1, round_half_up(l_out / density))
        records.append(
            ObservationRecord(
                id=f"{prefix}-{i:06d}",
                label=language,
                input_bytes=l_in,
                output_bytes=l_out,
                output_tokens=n_tok,
                t_send=t_start + i * send_interval,
            )
        )
    return Trace(mode=mode, records=tuple(records))


def synth_multi(
    model: DensityModel,
    count_per_language: int,
    input_sampler,
    seed: int,
    mode: str = "streaming",
    send_interval: float = 1.0,
    id_prefix: str = "",
) -> Trace:
    """One trace covering every language, interleaved in time."""
    per = [
        synth_trace(
            model,
            lang,
            count_per_language,
            input_sampler,
            seed,
            mode=mode,
            t_start=j * send_interval,
            send_interval=send_interval * len(model.languages),
            id_prefix=f"{id_prefix}{lang}",
        )
        for j, lang in enumerate(model.names())
    ]
    merged = [r for tr in per for r in tr.records]
    merged.sort(key=lambda r: (r.t_send, r.id))
    return Trace(mode=mode, records=tuple(merged))


def save_density_model(model: DensityModel, path: str) -> None:
    lines = [json.dumps({"format": DENSITY_FORMAT_TAG, "floor": model.floor})]
    for name, p in model.languages.items():
        lines.append(
            json.dumps(
                {
                    "language": name,
                    "mean_density": p.mean_density,
                    "sd_density": p.sd_density,
                    "mean_ratio": p.mean_ratio,
                    "sd_ratio": p.sd_ratio,
                    "corr": p.corr,
                }
            )
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_density_model(path: str) -> DensityModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty density model file")
    header = json.loads(lines[0])
    if not isinstance(header, dict) or header.get("format") != DENSITY_FORMAT_TAG:
        raise ValueError(f"{path}: bad density model header")
    langs: dict[str, LanguageParams] = {}
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        obj = json.loads(line)
        name = obj.pop("language")
        if name in langs:
            raise ValueError(f"{path}: line {i}: duplicate language {name!r}")
        langs[name] = LanguageParams(**obj)
    return DensityModel(languages=langs, floor=float(header.get("floor", 0.1)))


def with_language(model: DensityModel, name: str, params: LanguageParams) -> DensityModel:
    langs = dict(model.languages)
    langs[name] = params
    return replace(model, languages=langs)
