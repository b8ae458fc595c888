"""Padding defense and the distribution-level defense stand-ins.

System-level padding raises every response's token count and byte length
to the largest value expected for its input length, then re-simulates the
timestamps so the timing channel reflects the delayed responses. The
prompt-level defense is modeled as a compliance-weighted replacement of
the token-count distribution, the tokenizer-level one as pooling the
per-language density parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from tokenleak.class_attack import FixedLengthRule, TaskModel
from tokenleak.density import DensityModel, LanguageParams
from tokenleak.servesim import TimingModel, simulate_batch
from tokenleak.trace import Trace

REPORT_FORMAT_TAG = "tokenleak-defense-report/1"

PAD_RULES = ("windowed", "global")


@dataclass(frozen=True)
class DefenseReport:
    defense: str
    pre_asr: float
    post_asr: float
    latency_penalty: float
    byte_padding: float

    def __post_init__(self) -> None:
        for name in ("pre_asr", "post_asr"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.latency_penalty < 0 or self.byte_padding < 0:
            raise ValueError("penalties must be >= 0")

    def to_obj(self) -> dict:
        return {
            "format": REPORT_FORMAT_TAG,
            "defense": self.defense,
            "pre_asr": self.pre_asr,
            "post_asr": self.post_asr,
            "latency_penalty": self.latency_penalty,
            "byte_padding": self.byte_padding,
        }


def save_defense_report(report: DefenseReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_obj(), fh, indent=2)
        fh.write("\n")


def format_defense_report(report: DefenseReport) -> str:
    rows = [
        ("defense", report.defense),
        ("pre-defense ASR", f"{report.pre_asr:.3f}"),
        ("post-defense ASR", f"{report.post_asr:.3f}"),
        ("latency penalty", f"{report.latency_penalty * 100:.1f}%"),
        ("byte padding", f"{report.byte_padding * 100:.1f}%"),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _window_targets(
    values: np.ndarray, lengths: np.ndarray, ref_values: np.ndarray,
    ref_lengths: np.ndarray, rule: str, window: float,
) -> np.ndarray:
    global_max = int(ref_values.max())
    if rule == "global":
        return np.full(len(values), global_max)
    targets = np.empty(len(values), dtype=int)
    for i, l_in in enumerate(lengths):
        mask = np.abs(ref_lengths - l_in) <= window * l_in
        targets[i] = int(ref_values[mask].max()) if mask.any() else global_max
    return targets


def pad_trace(
    trace: Trace,
    reference: Trace,
    timing_model: TimingModel,
    rule: str = "windowed",
    window: float = 0.10,
) -> Trace:
    """Pad token counts and byte lengths up to the reference maxima.

    The default rule conditions the target on input length (maximum over
    reference records whose input_bytes lie within +/-`window` of the
    record's); `rule="global"` uses the unconditional maximum. Timestamps
    are re-simulated so slower padded responses show up in the timing
    channel. Never decreases any record's tokens, bytes, or duration.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    if rule not in PAD_RULES:
        raise ValueError(f"rule must be one of {PAD_RULES}")
    for rec in reference:
        if rec.output_tokens is None:
            raise ValueError(f"reference record {rec.id!r} lacks output_tokens")
    lengths = np.array([r.input_bytes for r in trace], dtype=float)
    tokens = np.array([_req_tokens(r) for r in trace])
    out_bytes = np.array([r.output_bytes for r in trace])
    ref_lengths = np.array([r.input_bytes for r in reference], dtype=float)
    ref_tokens = np.array([r.output_tokens for r in reference])
    ref_bytes = np.array([r.output_bytes for r in reference])
    tok_targets = _window_targets(tokens, lengths, ref_tokens, ref_lengths, rule, window)
    byte_targets = _window_targets(out_bytes, lengths, ref_bytes, ref_lengths, rule, window)
    padded = []
    for i, rec in enumerate(trace):
        padded.append(
            replace(
                rec,
                output_tokens=max(rec.output_tokens, int(tok_targets[i])),
                output_bytes=max(rec.output_bytes, int(byte_targets[i])),
                t_first=None,
                t_done=None,
            )
        )
    return simulate_batch(timing_model, Trace(mode=trace.mode, records=tuple(padded)))


def _req_tokens(rec) -> int:
    if rec.output_tokens is None:
        raise ValueError(f"record {rec.id!r} lacks output_tokens; cannot pad")
    return rec.output_tokens


@dataclass(frozen=True)
class PenaltyReport:
    latency_penalty: float
    byte_padding: float


def penalty_report(original: Trace, padded: Trace) -> PenaltyReport:
    """Fractional increases in mean response duration and mean output bytes."""
    if len(original) != len(padded) or len(original) == 0:
        raise ValueError("need two equal-length non-empty traces")
    dur0 = np.array([r.duration for r in original])
    dur1 = np.array([r.duration for r in padded])
    b0 = np.array([r.output_bytes for r in original], dtype=float)
    b1 = np.array([r.output_bytes for r in padded], dtype=float)
    return PenaltyReport(
        latency_penalty=float(dur1.mean() / dur0.mean() - 1.0),
        byte_padding=float(b1.mean() / b0.mean() - 1.0),
    )


def fixed_length_transform(
    model: TaskModel, target_tokens: float, compliance: float, sd: float = 5.0
) -> TaskModel:
    """Prompt-level defense: with the given per-record probability, samples
    get a token count drawn around `target_tokens` instead of the task's
    class-conditional one. Compliance 0 is the identity."""
    if not 0.0 <= compliance <= 1.0:
        raise ValueError("compliance must lie in [0, 1]")
    if compliance == 0.0:
        return replace(model, fixed_length=None)
    return replace(
        model,
        fixed_length=FixedLengthRule(
            target_tokens=target_tokens, compliance=compliance, sd=sd
        ),
    )


def uniform_tokenizer_model(model: DensityModel) -> DensityModel:
    """Tokenizer-level defense: every language gets the pooled density
    parameters. Ratio parameters stay put (morphology is not fixed by
    tokenization)."""
    if not model.languages:
        raise ValueError("density model has no languages")
    means = [p.mean_density for p in model.languages.values()]
    variances = [p.sd_density**2 for p in model.languages.values()]
    pooled_mean = float(np.mean(means))
    pooled_sd = float(np.sqrt(np.mean(variances)))
    languages = {
        name: LanguageParams(
            mean_density=pooled_mean,
            sd_density=pooled_sd,
            mean_ratio=p.mean_ratio,
            sd_ratio=p.sd_ratio,
            corr=p.corr,
        )
        for name, p in model.languages.items()
    }
    return replace(model, languages=languages)
