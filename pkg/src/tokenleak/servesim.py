"""Deterministic simulator of an LLM serving endpoint and its network path.

Maps a record's token count to timestamps: one-way network delay, a
time-to-first-token term, then one per-token decode step, all scaled by a
wall-clock load multiplier. Noise draws are keyed by (model seed, record
id), so re-simulating a record is bit-identical regardless of batch order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from tokenleak.seeding import rng_for
from tokenleak.trace import ObservationRecord, Trace

TIMING_FORMAT_TAG = "tokenleak-timing/1"


@dataclass(frozen=True)
class PiecewiseLoad:
    """Piecewise-constant load multiplier; breakpoints are (t_start, value)."""

    breakpoints: tuple[tuple[float, float], ...] = ((0.0, 1.0),)

    def __post_init__(self) -> None:
        pts = tuple((float(t), float(m)) for t, m in self.breakpoints)
        if not pts:
            raise ValueError("need at least one breakpoint")
        if any(m < 1.0 for _, m in pts):
            raise ValueError("load multiplier must be >= 1 everywhere")
        if list(pts) != sorted(pts, key=lambda p: p[0]):
            raise ValueError("breakpoints must be sorted by time")
        object.__setattr__(self, "breakpoints", pts)

    def __call__(self, t: float) -> float:
        level = self.breakpoints[0][1]
        for t_start, m in self.breakpoints:
            if t >= t_start:
                level = m
            else:
                break
        return level

    def to_spec(self):
        return [list(p) for p in self.breakpoints]


@dataclass(frozen=True)
class SinusoidalLoad:
    """Smoothly drifting load, for concurrent-profiling stress tests."""

    base: float = 1.5
    amplitude: float = 0.5
    period: float = 3600.0

    def __post_init__(self) -> None:
        if self.base - self.amplitude < 1.0:
            raise ValueError("load multiplier must be >= 1 everywhere")
        if self.period <= 0:
            raise ValueError("period must be positive")

    def __call__(self, t: float) -> float:
        return self.base + self.amplitude * math.sin(2.0 * math.pi * t / self.period)

    def to_spec(self):
        return {
            "kind": "sinusoidal",
            "base": self.base,
            "amplitude": self.amplitude,
            "period": self.period,
        }


def load_profile_from_spec(spec) -> PiecewiseLoad | SinusoidalLoad:
    if isinstance(spec, (PiecewiseLoad, SinusoidalLoad)):
        return spec
    if isinstance(spec, dict) and spec.get("kind") == "sinusoidal":
        return SinusoidalLoad(
            base=float(spec["base"]),
            amplitude=float(spec["amplitude"]),
            period=float(spec["period"]),
        )
    if isinstance(spec, (list, tuple)):
        return PiecewiseLoad(tuple((float(t), float(m)) for t, m in spec))
    raise ValueError(f"bad load profile spec: {spec!r}")


@dataclass(frozen=True)
class TimingModel:
    ttft_mean: float = 0.5
    tpot_mean: float = 0.05
    noise_sd_ttft: float = 0.0
    noise_sd_tpot: float = 0.0
    noise_sd_net: float = 0.0
    net_delay_oneway: float = 0.0
    load_profile: PiecewiseLoad | SinusoidalLoad = field(default_factory=PiecewiseLoad)
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("ttft_mean", "tpot_mean", "noise_sd_ttft", "noise_sd_tpot",
                     "noise_sd_net", "net_delay_oneway"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def simulate(model: TimingModel, rec: ObservationRecord, mode: str = "streaming") -> ObservationRecord:
    """Timestamps for one record served in isolation."""
    return _simulate_from(model, rec, service_start=rec.t_send, mode=mode)


def _simulate_from(
    model: TimingModel, rec: ObservationRecord, service_start: float, mode: str
) -> ObservationRecord:
    if rec.output_tokens is None:
        raise ValueError(f"record {rec.id!r}: output_tokens required for simulation")
    n = rec.output_tokens
    rng = rng_for(model.seed, "noise", rec.id)
    ttft = model.ttft_mean
    if model.noise_sd_ttft > 0:
        ttft = max(0.0, ttft + rng.normal(0.0, model.noise_sd_ttft))
    decode = np.full(n, model.tpot_mean)
    if model.noise_sd_tpot > 0:
        decode = np.maximum(0.0, decode + rng.normal(0.0, model.noise_sd_tpot, n))
    load = model.load_profile(service_start)
    t_first = service_start + model.net_delay_oneway + load * ttft
    t_done = t_first + load * float(decode.sum()) + model.net_delay_oneway
    return replace(
        rec,
        t_first=None if mode == "non-streaming" else t_first,
        t_done=t_done,
    )


def simulate_each(model: TimingModel, trace: Trace) -> Trace:
    """Serve every record in isolation (a sequential client: requests never
    overlap, so no queueing delay enters the measured durations)."""
    return Trace(
        mode=trace.mode,
        records=tuple(simulate(model, rec, trace.mode) for rec in trace),
    )


def simulate_batch(model: TimingModel, trace: Trace) -> Trace:
    """Serve a whole trace through a batch-size-one endpoint.

    Requests are serialized in t_send order: a request's service starts at
    max(its t_send, the instant the server finished the previous one).
    Output keeps the input record order.
    """
    order = sorted(range(len(trace)), key=lambda i: (trace[i].t_send, i))
    results: dict[int, ObservationRecord] = {}
    server_free = 0.0
    for i in order:
        rec = trace[i]
        service_start = max(rec.t_send, server_free)
        done = _simulate_from(model, rec, service_start, trace.mode)
        results[i] = done
        server_free = done.t_done - model.net_delay_oneway
    return Trace(mode=trace.mode, records=tuple(results[i] for i in range(len(trace))))


def ping(model: TimingModel, seq: int = 0) -> float:
    """One round-trip time measurement (2x one-way delay plus jitter)."""
    rtt = 2.0 * model.net_delay_oneway
    if model.noise_sd_net > 0:
        rng = rng_for(model.seed, "ping", seq)
        rtt = max(0.0, rtt + rng.normal(0.0, model.noise_sd_net))
    return rtt


def ping_series(model: TimingModel, count: int) -> list[float]:
    return [ping(model, i) for i in range(count)]


def save_timing_model(model: TimingModel, path: str) -> None:
    obj = {
        "format": TIMING_FORMAT_TAG,
        "ttft_mean": model.ttft_mean,
        "tpot_mean": model.tpot_mean,
        "noise_sd_ttft": model.noise_sd_ttft,
        "noise_sd_tpot": model.noise_sd_tpot,
        "noise_sd_net": model.noise_sd_net,
        "net_delay_oneway": model.net_delay_oneway,
        "load_profile": model.load_profile.to_spec(),
        "seed": model.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def load_timing_model(path: str) -> TimingModel:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict) or obj.get("format") != TIMING_FORMAT_TAG:
        raise ValueError(f"{path}: bad timing model header")
    return TimingModel(
        ttft_mean=float(obj["ttft_mean"]),
        tpot_mean=float(obj["tpot_mean"]),
        noise_sd_ttft=float(obj.get("noise_sd_ttft", 0.0)),
        noise_sd_tpot=float(obj.get("noise_sd_tpot", 0.0)),
        noise_sd_net=float(obj.get("noise_sd_net", 0.0)),
        net_delay_oneway=float(obj.get("net_delay_oneway", 0.0)),
        load_profile=load_profile_from_spec(obj.get("load_profile", [[0.0, 1.0]])),
        seed=int(obj["seed"]),
    )
