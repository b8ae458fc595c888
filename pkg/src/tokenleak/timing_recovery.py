"""Recovering output token counts (or densities) from timing alone.

Three profiling strategies estimate the endpoint's first-token latency and
per-token decode time: `naive` regresses one probe trace, `averaged` pools
the per-trace estimates of several historical probe traces, and
`concurrent` keeps a per-minute sample stream and uses the median of the
five samples nearest each request. Round-trip network time is estimated
from pings and subtracted before anything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from tokenleak.density import round_half_up
from tokenleak.trace import ObservationRecord, Trace

STRATEGIES = ("naive", "averaged", "concurrent")


def pearson(xs, ys) -> float:
    """Product-moment correlation; undefined (error) when either side is constant."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("pearson needs two equal-length 1-D sequences")
    if len(x) < 2:
        raise ValueError("pearson needs at least 2 points")
    vx = x - x.mean()
    vy = y - y.mean()
    sx = float(vx @ vx)
    sy = float(vy @ vy)
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero variance: correlation undefined")
    return float((vx @ vy) / math.sqrt(sx * sy))


def trace_pearson(trace: Trace) -> float:
    """Correlation of response duration vs true token count, the linearity
    diagnostic for a serving endpoint."""
    xs, ys = [], []
    for rec in trace:
        if rec.output_tokens is not None and rec.t_done is not None:
            xs.append(rec.duration)
            ys.append(rec.output_tokens)
    return pearson(xs, ys)


@dataclass(frozen=True)
class NetworkProfile:
    strategy: str
    ttft_est: float
    tpot_est: float
    rtt_est: float
    window: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.tpot_est <= 0:
            raise ValueError("tpot_est must be > 0 for a usable profile")


def _regress(tokens: np.ndarray, adjusted: np.ndarray, fit_intercept: bool) -> tuple[float, float]:
    if len(tokens) < 2 or len(np.unique(tokens)) < 2:
        raise ValueError("need >= 2 probe points with distinct token counts")
    if not fit_intercept:
        slope = float(tokens @ adjusted) / float(tokens @ tokens)
        return 0.0, slope
    mx = tokens.mean()
    my = adjusted.mean()
    vx = tokens - mx
    slope = float(vx @ (adjusted - my)) / float(vx @ vx)
    return my - slope * mx, slope


def _probe_points(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for rec in trace:
        if rec.output_tokens is None or rec.t_done is None:
            raise ValueError(f"probe record {rec.id!r} needs output_tokens and t_done")
        xs.append(float(rec.output_tokens))
        ys.append(rec.duration)
    return np.asarray(xs), np.asarray(ys)


def probe_round(records: list[ObservationRecord], rtt_est: float, fit_intercept: bool = True):
    """(time, ttft_sample, tpot_sample) from one round of known-count probes.

    The endpoint is non-streaming, so first-token time is unobservable; a
    round carries at least two probes with distinct token counts and the
    pair is solved by regression on rtt-adjusted durations. Under a load
    multiplier the samples absorb it, which is exactly what the concurrent
    strategy needs.
    """
    xs, ys = _probe_points(Trace(mode="non-streaming", records=tuple(records)))
    ttft, tpot = _regress(xs, ys - rtt_est, fit_intercept)
    return float(np.median([r.t_send for r in records])), ttft, tpot


class ConcurrentProfiler:
    """Accumulates per-minute (ttft, tpot) samples; readers get snapshots."""

    def __init__(self, rtt_est: float = 0.0, fit_intercept: bool = True):
        self.rtt_est = rtt_est
        self.fit_intercept = fit_intercept
        self._samples: list[tuple[float, float, float]] = []

    def add_sample(self, time: float, ttft_sample: float, tpot_sample: float) -> None:
        self._samples.append((time, ttft_sample, tpot_sample))

    def add_round(self, records: list[ObservationRecord]) -> None:
        self.add_sample(*probe_round(records, self.rtt_est, self.fit_intercept))

    def snapshot(self, now: float | None = None) -> NetworkProfile:
        if len(self._samples) < 5:
            raise ValueError(
                f"concurrent profile needs >= 5 samples, have {len(self._samples)}"
            )
        window = tuple(sorted(self._samples))
        if now is None:
            now = window[-1][0]
        ttft, tpot = _window_medians(window, now)
        return NetworkProfile(
            strategy="concurrent",
            ttft_est=ttft,
            tpot_est=tpot,
            rtt_est=self.rtt_est,
            window=window,
        )


def _window_medians(window, t: float) -> tuple[float, float]:
    """Medians over the 5 samples nearest t (per-minute probes make this the
    5-minute window around t)."""
    times = np.array([w[0] for w in window])
    nearest = np.argsort(np.abs(times - t), kind="stable")[:5]
    ttfts = [window[i][1] for i in nearest]
    tpots = [window[i][2] for i in nearest]
    return float(np.median(ttfts)), float(np.median(tpots))


def build_profile(
    strategy: str,
    probe_traces,
    pings: list[float],
    now: float | None = None,
    round_interval: float = 60.0,
    fit_intercept: bool = True,
) -> NetworkProfile:
    """Build a network profile from probe traces and ping measurements.

    `naive` and `concurrent` take one probe trace; `averaged` takes the
    list of historical probe traces and averages their per-trace estimates.
    Concurrent rounds are grouped by `round_interval` buckets of t_send.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    rtt_est = float(np.median(pings)) if pings else 0.0
    if strategy == "averaged":
        traces = list(probe_traces) if not isinstance(probe_traces, Trace) else [probe_traces]
        if not traces:
            raise ValueError("averaged strategy needs at least one probe trace")
        pairs = []
        for tr in traces:
            xs, ys = _probe_points(tr)
            pairs.append(_regress(xs, ys - rtt_est, fit_intercept))
        ttft = float(np.mean([p[0] for p in pairs]))
        tpot = float(np.mean([p[1] for p in pairs]))
        return NetworkProfile(strategy="averaged", ttft_est=ttft, tpot_est=tpot, rtt_est=rtt_est)
    if isinstance(probe_traces, Trace):
        trace = probe_traces
    else:
        traces = list(probe_traces)
        if len(traces) != 1:
            raise ValueError(f"{strategy} strategy takes exactly one probe trace")
        trace = traces[0]
    if strategy == "naive":
        xs, ys = _probe_points(trace)
        ttft, tpot = _regress(xs, ys - rtt_est, fit_intercept)
        return NetworkProfile(strategy="naive", ttft_est=ttft, tpot_est=tpot, rtt_est=rtt_est)
    profiler = ConcurrentProfiler(rtt_est=rtt_est, fit_intercept=fit_intercept)
    rounds: dict[int, list[ObservationRecord]] = {}
    for rec in trace:
        rounds.setdefault(int(rec.t_send // round_interval), []).append(rec)
    for key in sorted(rounds):
        profiler.add_round(rounds[key])
    return profiler.snapshot(now)


def _estimate(profile: NetworkProfile, rec: ObservationRecord) -> tuple[int, bool]:
    if rec.t_done is None:
        raise ValueError(f"record {rec.id!r}: t_send/t_done required for estimation")
    ttft, tpot = profile.ttft_est, profile.tpot_est
    if profile.strategy == "concurrent":
        if len(profile.window) < 5:
            raise ValueError("concurrent profile window holds < 5 samples")
        ttft, tpot = _window_medians(profile.window, rec.t_send)
    adjusted = rec.duration - profile.rtt_est - ttft
    if adjusted <= 0.0:
        return 1, True
    return max(1, round_half_up(adjusted / tpot)), False


def estimate_tokens(profile: NetworkProfile, rec: ObservationRecord) -> int:
    """Token count recovered from the response duration; clamped below at 1."""
    return _estimate(profile, rec)[0]


def estimate_density(
    profile: NetworkProfile, rec: ObservationRecord, proportional: bool = False
) -> float:
    """Bytes/token from the estimated count, or the raw bytes-per-second
    surrogate (`proportional`), which preserves the cross-language ordering."""
    if proportional:
        if rec.t_done is None:
            raise ValueError(f"record {rec.id!r}: t_send/t_done required for estimation")
        adjusted = rec.duration - profile.rtt_est
        if adjusted <= 0:
            raise ValueError(f"record {rec.id!r}: non-positive adjusted duration")
        return rec.output_bytes / adjusted
    return rec.output_bytes / estimate_tokens(profile, rec)


def estimate_trace(profile: NetworkProfile, trace: Trace) -> tuple[Trace, list[str]]:
    """Replace every record's token count with the timing estimate.

    Returns the new trace plus the ids of records whose adjusted duration
    was non-positive (their counts are clamped to 1).
    """
    flagged: list[str] = []
    records = []
    for rec in trace:
        n, bad = _estimate(profile, rec)
        if bad:
            flagged.append(rec.id)
        records.append(rec.with_tokens(n))
    return Trace(mode=trace.mode, records=tuple(records)), flagged
