"""Shipped planted distributions and timing presets for the benchmarks.

The translation model packs five languages into a partially overlapping
2D feature layout: two confusable pairs plus one language with a distinct
output/input ratio, so single-sample attacks are noisy while many-sample
attacks separate cleanly. All absolute values are synthetic; only the
trend structure matters.
"""

from __future__ import annotations

from tokenleak.class_attack import TaskModel
from tokenleak.density import DensityModel, InputSampler, LanguageParams
from tokenleak.seeding import rng_for
from tokenleak.servesim import PiecewiseLoad, SinusoidalLoad, TimingModel


def planted_translation_model() -> DensityModel:
    """Five-language benchmark over (bytes/token, output/input ratio)."""
    return DensityModel(
        languages={
            "chinese": LanguageParams(1.40, 0.45, 0.95, 0.16, 0.3),
            "korean": LanguageParams(1.58, 0.45, 1.00, 0.16, 0.3),
            "russian": LanguageParams(1.95, 0.45, 1.35, 0.16, 0.3),
            "french": LanguageParams(2.30, 0.45, 1.06, 0.16, 0.3),
            "spanish": LanguageParams(2.43, 0.45, 1.10, 0.16, 0.3),
        }
    )


def korean_heavy_model() -> DensityModel:
    """One language needs twice the tokens of the rest at equal byte lengths;
    used for the padding-cost arithmetic checks."""
    heavy = LanguageParams(1.25, 0.00125, 1.0, 0.001, 0.0)
    light = LanguageParams(2.50, 0.00250, 1.0, 0.001, 0.0)
    return DensityModel(
        languages={
            "korean": heavy,
            "chinese": light,
            "french": light,
            "russian": light,
            "spanish": light,
        }
    )


def default_input_sampler() -> InputSampler:
    return InputSampler.uniform(80, 300)


def planted_task(task: str = "task-planted") -> TaskModel:
    """Two-class task with a moderate inherent token-count gap."""
    return TaskModel(
        task=task,
        labels=("first", "second"),
        slope=0.10,
        offsets=(30.0, 42.0),
        noise_sd=6.0,
        bytes_per_token=4.2,
    )


def random_task(seed: int, index: int) -> TaskModel:
    """Random planted task used by the threshold-fit oracle comparisons."""
    rng = rng_for(seed, "random-task", index)
    slope = float(rng.uniform(0.0, 0.25))
    base = float(rng.uniform(10.0, 40.0))
    gap = float(rng.uniform(2.0, 25.0))
    noise = float(rng.uniform(2.0, 8.0))
    return TaskModel(
        task=f"task-rnd-{index}",
        labels=("first", "second"),
        slope=slope,
        offsets=(base, base + gap),
        noise_sd=noise,
        bytes_per_token=float(rng.uniform(3.0, 5.0)),
    )


def local_timing_model(seed: int = 0, noisy: bool = False) -> TimingModel:
    """Dedicated local endpoint: near-perfect linearity, tiny jitter when
    `noisy` is set (still in the >= 0.987 correlation regime)."""
    return TimingModel(
        ttft_mean=0.08,
        tpot_mean=0.03,
        noise_sd_ttft=0.05 if noisy else 0.0,
        noise_sd_tpot=0.003 if noisy else 0.0,
        noise_sd_net=0.002 if noisy else 0.0,
        net_delay_oneway=0.002,
        seed=seed,
    )


def wide_area_timing_model(seed: int = 0, load=None) -> TimingModel:
    """Cross-region serving path with a visible round trip."""
    return TimingModel(
        ttft_mean=0.25,
        tpot_mean=0.04,
        noise_sd_ttft=0.006,
        noise_sd_tpot=0.0008,
        noise_sd_net=0.0015,
        net_delay_oneway=0.03,
        load_profile=PiecewiseLoad() if load is None else load,
        seed=seed,
    )


def congested_api_model(seed: int = 0) -> TimingModel:
    """Commercial-API-like regime: heavy per-token jitter plus strong smooth
    load drift, which drags the duration/token correlation far below 1."""
    return TimingModel(
        ttft_mean=0.3,
        tpot_mean=0.012,
        noise_sd_ttft=0.08,
        noise_sd_tpot=0.012,
        noise_sd_net=0.004,
        net_delay_oneway=0.025,
        load_profile=SinusoidalLoad(base=1.8, amplitude=0.8, period=900.0),
        seed=seed,
    )


def day_load_profile(
    day_multipliers,
    day_seconds: float,
    wobble: float = 0.0,
    wobble_period: float = 1800.0,
    step: float = 60.0,
) -> PiecewiseLoad:
    """Piecewise load with one base level per simulated day.

    `wobble` adds slow intra-day variation on top of the day level (up to
    `wobble * base` extra), sampled at `step` resolution. Server load is
    never below the day's base, so the multiplier stays >= 1.
    """
    if wobble == 0.0:
        return PiecewiseLoad(
            tuple((i * day_seconds, float(m)) for i, m in enumerate(day_multipliers))
        )
    import math

    points = []
    total = day_seconds * len(day_multipliers)
    t = 0.0
    while t < total:
        base = float(day_multipliers[int(t // day_seconds)])
        swing = 0.5 * (1.0 + math.sin(2.0 * math.pi * t / wobble_period))
        points.append((t, base * (1.0 + wobble * swing)))
        t += step
    return PiecewiseLoad(tuple(points))


def probe_trace_records(counts, t_send: float, spacing: float = 15.0,
                        bytes_per_token: float = 4.0):
    """Known-token-count probe records for one profiling round.

    Probes are spaced far enough apart that they never queue behind each
    other on a batch-size-one endpoint.
    """
    from tokenleak.trace import ObservationRecord

    return [
        ObservationRecord(
            id=f"probe-{t_send:.0f}-{i}",
            label="probe",
            input_bytes=64,
            output_bytes=int(round(n * bytes_per_token)),
            output_tokens=int(n),
            t_send=t_send + spacing * i,
        )
        for i, n in enumerate(counts)
    ]
