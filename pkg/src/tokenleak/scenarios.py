"""Shipped end-to-end experiment pipelines and their report bundles.

Every scenario is a pure function of (config, seed): stage seeds are derived
by stable-hashing stage names off the one master seed, reports carry only
plain data, and rerunning a config yields byte-identical bundle files.
"""

from __future__ import annotations

import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from tokenleak import class_attack, defense, lang_attack, planted, servesim, timing_recovery
from tokenleak.density import DensityModel, InputSampler, load_density_model, synth_multi
from tokenleak.seeding import derive_seed
from tokenleak.servesim import simulate_batch, simulate_each
from tokenleak.trace import Trace

BUNDLE_FORMAT_TAG = "tokenleak-report/1"


class ScenarioError(RuntimeError):
    """A scenario stage failed; carries the stage name."""

    def __init__(self, stage: str, err: Exception):
        self.stage = stage
        super().__init__(f"stage '{stage}': {err}")


@contextmanager
def _stage(name: str):
    try:
        yield
    except ScenarioError:
        raise
    except Exception as e:
        raise ScenarioError(name, e) from e


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    scenario: str
    knobs: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)

    @staticmethod
    def from_file(path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        if not isinstance(obj, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        if "seed" not in obj:
            raise ValueError(f"{path}: config requires a seed")
        cfg = ExperimentConfig(
            seed=int(obj["seed"]),
            scenario=str(obj.get("scenario", "")),
            knobs=dict(obj.get("knobs", {})),
            paths=dict(obj.get("paths", {})),
        )
        for key, value in cfg.paths.items():
            if value is not None and not os.path.exists(value):
                raise ValueError(f"{path}: referenced path {key}={value!r} does not exist")
        return cfg

    def to_obj(self) -> dict:
        return {
            "seed": self.seed,
            "scenario": self.scenario,
            "knobs": self.knobs,
            "paths": self.paths,
        }


def _knobs(config: ExperimentConfig, defaults: dict) -> dict:
    unknown = set(config.knobs) - set(defaults)
    if unknown:
        raise ScenarioError("config", ValueError(f"unknown knobs: {sorted(unknown)}"))
    out = dict(defaults)
    out.update(config.knobs)
    return out


def _density_model(config: ExperimentConfig) -> DensityModel:
    path = config.paths.get("density_model")
    if path:
        return load_density_model(path)
    return planted.planted_translation_model()


def _timing_model(config: ExperimentConfig, seed: int, noisy: bool = False):
    path = config.paths.get("timing_model")
    if path:
        return servesim.load_timing_model(path)
    return planted.local_timing_model(seed=seed, noisy=noisy)


def _pyify(obj):
    """Plain data only, so bundles serialize canonically."""
    if isinstance(obj, dict):
        return {str(k): _pyify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pyify(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_pyify(v) for v in obj]
    return obj


# ---------------------------------------------------------------- scenarios


def _scenario_translation_planted(config: ExperimentConfig) -> dict:
    k = _knobs(
        config,
        dict(
            profiling_count=250,
            test_count=150,
            predictions_per_label=40,
            sample_grid=[1, 10, 30, 50],
            features=["both", "density", "ratio"],
            input_sampler={"kind": "uniform", "low": 80, "high": 300},
        ),
    )
    sampler = InputSampler.from_spec(k["input_sampler"])
    with _stage("load-models"):
        model = _density_model(config)
    with _stage("synth-profiling"):
        train = synth_multi(
            model, k["profiling_count"], sampler,
            seed=derive_seed(config.seed, "translation", "profiling"),
            send_interval=30.0,
        )
    with _stage("fit-profiles"):
        profiles = lang_attack.fit_profile_set(train, "planted", "english")
    with _stage("synth-test"):
        test = synth_multi(
            model, k["test_count"], sampler,
            seed=derive_seed(config.seed, "translation", "test"),
            send_interval=30.0, id_prefix="t-",
        )
    asr: dict = {}
    series: dict = {}
    with _stage("evaluate"):
        for feature in k["features"]:
            asr[feature] = {}
            series[feature] = []
            for count in k["sample_grid"]:
                result = lang_attack.evaluate_asr(
                    profiles, test, samples_per_prediction=int(count),
                    predictions_per_label=k["predictions_per_label"],
                    feature=feature,
                    seed=derive_seed(config.seed, "translation", "eval", feature, count),
                )
                asr[feature][str(count)] = result.to_obj()
                series[feature].append([int(count), result.average])
    return {"labels": profiles.labels(), "asr": asr, "series": series}


def _scenario_translation_timing(config: ExperimentConfig) -> dict:
    k = _knobs(
        config,
        dict(
            profiling_count=250,
            test_count=150,
            samples=50,
            predictions_per_label=40,
            probe_rounds=40,
            probe_counts=[10, 40, 80],
            ping_count=20,
            strategy="naive",
            proportional=False,
        ),
    )
    sampler = InputSampler.uniform(80, 300)
    with _stage("load-models"):
        density = _density_model(config)
        timing = _timing_model(config, seed=derive_seed(config.seed, "tt", "timing"), noisy=True)
    with _stage("synth"):
        train_true = synth_multi(
            density, k["profiling_count"], sampler,
            seed=derive_seed(config.seed, "tt", "profiling"),
            mode="non-streaming", send_interval=20.0,
        )
        test_true = synth_multi(
            density, k["test_count"], sampler,
            seed=derive_seed(config.seed, "tt", "test"),
            mode="non-streaming", send_interval=20.0, id_prefix="t-",
        )
    with _stage("simulate"):
        sim_train = simulate_each(timing, train_true)
        sim_test = simulate_each(timing, test_true)
        records = []
        for i in range(k["probe_rounds"]):
            records.extend(planted.probe_trace_records(k["probe_counts"], 120.0 * i))
        probes = simulate_batch(timing, Trace(mode="non-streaming", records=tuple(records)))
        pings = servesim.ping_series(timing, k["ping_count"])
    with _stage("network-profile"):
        profile = timing_recovery.build_profile(k["strategy"], probes, pings)
    with _stage("estimate"):
        est_train, flagged_train = timing_recovery.estimate_trace(profile, sim_train)
        est_test, flagged_test = timing_recovery.estimate_trace(profile, sim_test)
    with _stage("evaluate"):
        linearity = timing_recovery.trace_pearson(sim_train)
        profiles_true = lang_attack.fit_profile_set(train_true, "planted", "english")
        profiles_est = lang_attack.fit_profile_set(est_train, "planted", "english")
        eval_seed = derive_seed(config.seed, "tt", "eval")
        asr_true = lang_attack.evaluate_asr(
            profiles_true, test_true, k["samples"], k["predictions_per_label"], seed=eval_seed
        )
        asr_est = lang_attack.evaluate_asr(
            profiles_est, est_test, k["samples"], k["predictions_per_label"], seed=eval_seed
        )
    return {
        "pearson": linearity,
        "network_profile": {
            "strategy": profile.strategy,
            "ttft_est": profile.ttft_est,
            "tpot_est": profile.tpot_est,
            "rtt_est": profile.rtt_est,
        },
        "asr_true": asr_true.to_obj(),
        "asr_timing": asr_est.to_obj(),
        "delta_points": abs(asr_true.average - asr_est.average) * 100.0,
        "flagged": len(flagged_train) + len(flagged_test),
    }


def _planted_task_set(theta_gap_noise=((6.0, 6.0), (12.0, 6.0), (20.0, 6.0))):
    tasks = []
    for i, (gap, noise) in enumerate(theta_gap_noise):
        tasks.append(
            class_attack.TaskModel(
                task=f"task-{i}",
                labels=("first", "second"),
                slope=0.10,
                offsets=(30.0, 30.0 + gap),
                noise_sd=noise,
                bytes_per_token=4.2,
            )
        )
    return tasks


def _scenario_classification_planted(config: ExperimentConfig) -> dict:
    k = _knobs(
        config,
        dict(
            train_per_class=100,
            test_per_class=250,
            theta=0.5,
            magnitude=0.5,
            shifts=["unbiased", "augmenting", "diminishing"],
            gaps=[6.0, 12.0, 20.0],
            noise_sd=6.0,
        ),
    )
    tasks_path = config.paths.get("task_model")
    if tasks_path:
        tasks = [class_attack.load_task_model(tasks_path)]
    else:
        tasks = _planted_task_set(tuple((g, k["noise_sd"]) for g in k["gaps"]))
    sampler = InputSampler.uniform(50, 300)
    per_task: dict = {}
    averages = {shift: [] for shift in k["shifts"]}
    for task in tasks:
        per_task[task.task] = {}
        for shift in k["shifts"]:
            with _stage(f"{task.task}/{shift}"):
                variant = class_attack.bias_transform(task, shift, k["magnitude"])
                train = class_attack.synth_task_trace(
                    variant, k["train_per_class"], sampler,
                    seed=derive_seed(config.seed, "cls", task.task, shift, "train"),
                )
                test = class_attack.synth_task_trace(
                    variant, k["test_per_class"], sampler,
                    seed=derive_seed(config.seed, "cls", task.task, shift, "test"),
                )
                prof = class_attack.fit_threshold(list(train), theta=k["theta"], task=task.task)
                result = class_attack.evaluate_class_asr(prof, test)
                per_task[task.task][shift] = {
                    "alpha": prof.alpha,
                    "beta": prof.beta,
                    "train_asr": prof.train_asr,
                    "test_asr": result.average,
                    "per_class": result.per_class,
                }
                averages[shift].append(result.average)
    return {
        "tasks": per_task,
        "average_by_shift": {s: float(np.mean(v)) for s, v in averages.items()},
    }


def _scenario_timing_drift(config: ExperimentConfig) -> dict:
    k = _knobs(
        config,
        dict(
            day_multipliers=[1.0, 1.0, 1.3, 1.1, 2.0],
            day_minutes=90,
            probe_counts=[10, 80],
            train_per_class=100,
            test_per_class=60,
            theta=0.5,
            ping_count=10,
            intraday_wobble=0.3,
            strategies=["naive", "averaged", "concurrent"],
        ),
    )
    day_seconds = k["day_minutes"] * 60.0
    days = list(range(len(k["day_multipliers"])))
    with _stage("load-models"):
        timing = servesim.TimingModel(
            ttft_mean=0.2,
            tpot_mean=0.04,
            noise_sd_ttft=0.01,
            noise_sd_tpot=0.001,
            noise_sd_net=0.001,
            net_delay_oneway=0.01,
            load_profile=planted.day_load_profile(
                k["day_multipliers"], day_seconds, wobble=k["intraday_wobble"]
            ),
            seed=derive_seed(config.seed, "drift", "timing"),
        )
        task = planted.planted_task("task-drift")
    with _stage("probes"):
        records = []
        for day in days:
            for minute in range(0, k["day_minutes"] - 1):
                records.extend(
                    planted.probe_trace_records(
                        k["probe_counts"], day * day_seconds + 60.0 * minute
                    )
                )
        all_probes = simulate_batch(
            timing, Trace(mode="non-streaming", records=tuple(records))
        )
        pings = servesim.ping_series(timing, k["ping_count"])
        per_day_probes = [
            Trace(
                mode="non-streaming",
                records=tuple(
                    r for r in all_probes
                    if day * day_seconds <= r.t_send < (day + 1) * day_seconds
                ),
            )
            for day in days
        ]
    with _stage("network-profiles"):
        profiles = {}
        if "naive" in k["strategies"]:
            first_10min = Trace(
                mode="non-streaming",
                records=tuple(r for r in per_day_probes[0] if r.t_send < 600.0),
            )
            profiles["naive"] = timing_recovery.build_profile("naive", first_10min, pings)
        if "averaged" in k["strategies"]:
            profiles["averaged"] = timing_recovery.build_profile(
                "averaged", per_day_probes, pings
            )
        if "concurrent" in k["strategies"]:
            profiles["concurrent"] = timing_recovery.build_profile(
                "concurrent", all_probes, pings
            )
    sampler = InputSampler.uniform(50, 300)

    def synth_day(day: int, per_class: int, tag: str, seed_tag: str) -> Trace:
        trace = class_attack.synth_task_trace(
            task, per_class, sampler,
            seed=derive_seed(config.seed, "drift", seed_tag, day),
            mode="non-streaming",
            t_start=day * day_seconds + 300.0,
            send_interval=20.0,
            id_prefix=f"{tag}-d{day}-",
        )
        return simulate_each(timing, trace)

    with _stage("class-profiling"):
        # profile on every day; each strategy keeps its best discriminator
        day_train_sims = [
            synth_day(day, k["train_per_class"], "train", "train") for day in days
        ]
        class_profiles = {}
        profile_day = {}
        for strategy, prof in profiles.items():
            candidates = []
            for day, train_sim in enumerate(day_train_sims):
                est_train, _ = timing_recovery.estimate_trace(prof, train_sim)
                candidates.append(
                    class_attack.fit_threshold(
                        list(est_train), theta=k["theta"], task=f"task-drift-day{day}"
                    )
                )
            best = class_attack.select_best_profile(candidates)
            class_profiles[strategy] = best
            profile_day[strategy] = candidates.index(best)
    asr_by_strategy = {s: [] for s in profiles}
    mae_by_strategy = {s: [] for s in profiles}
    with _stage("attack-days"):
        for day in days:
            test_sim = synth_day(day, k["test_per_class"], "test", "test")
            truth = {
                r.id: r.output_tokens for r in test_sim
            }
            for strategy, prof in profiles.items():
                est_test, _ = timing_recovery.estimate_trace(prof, test_sim)
                result = class_attack.evaluate_class_asr(class_profiles[strategy], est_test)
                asr_by_strategy[strategy].append(result.average)
                mae_by_strategy[strategy].append(
                    float(np.mean([abs(r.output_tokens - truth[r.id]) for r in est_test]))
                )
    drift_day = int(np.argmax(k["day_multipliers"]))
    return {
        "days": days,
        "day_multipliers": [float(m) for m in k["day_multipliers"]],
        "drift_day": drift_day,
        "profile_day": profile_day,
        "asr_by_strategy": asr_by_strategy,
        "token_mae_by_strategy": mae_by_strategy,
    }


def _scenario_defense_padding(config: ExperimentConfig) -> dict:
    k = _knobs(
        config,
        dict(
            profiling_count=250,
            test_count=150,
            samples=30,
            predictions_per_label=40,
            rule="windowed",
            window=0.10,
        ),
    )
    sampler = InputSampler.uniform(80, 300)
    with _stage("load-models"):
        density = _density_model(config)
        timing = _timing_model(config, seed=derive_seed(config.seed, "pad", "timing"))
    with _stage("synth"):
        train = synth_multi(
            density, k["profiling_count"], sampler,
            seed=derive_seed(config.seed, "pad", "profiling"),
            mode="non-streaming", send_interval=60.0,
        )
        test = synth_multi(
            density, k["test_count"], sampler,
            seed=derive_seed(config.seed, "pad", "test"),
            mode="non-streaming", send_interval=60.0, id_prefix="t-",
        )
        sim_test = simulate_each(timing, test)
    with _stage("baseline-attack"):
        pre_profiles = lang_attack.fit_profile_set(train, "planted", "english")
        eval_seed = derive_seed(config.seed, "pad", "eval")
        pre = lang_attack.evaluate_asr(
            pre_profiles, test, k["samples"], k["predictions_per_label"], seed=eval_seed
        )
    with _stage("pad"):
        padded_train = defense.pad_trace(train, train, timing, rule=k["rule"], window=k["window"])
        padded_test = defense.pad_trace(sim_test, train, timing, rule=k["rule"], window=k["window"])
    with _stage("post-attack"):
        post_profiles = lang_attack.fit_profile_set(padded_train, "planted", "english")
        post = lang_attack.evaluate_asr(
            post_profiles, padded_test, k["samples"], k["predictions_per_label"], seed=eval_seed
        )
    with _stage("penalties"):
        penalties = defense.penalty_report(sim_test, padded_test)
        report = defense.DefenseReport(
            defense="pad",
            pre_asr=pre.average,
            post_asr=post.average,
            latency_penalty=max(0.0, penalties.latency_penalty),
            byte_padding=max(0.0, penalties.byte_padding),
        )
    return {
        "languages": pre_profiles.labels(),
        "chance_level": 1.0 / len(pre_profiles.labels()),
        "pre": pre.to_obj(),
        "post": post.to_obj(),
        "report": report.to_obj(),
    }


def _scenario_defense_fixed_length(config: ExperimentConfig) -> dict:
    k = _knobs(
        config,
        dict(
            compliances=[0.0, 0.5, 1.0],
            target_tokens=60.0,
            target_sd=5.0,
            train_per_class=120,
            test_per_class=250,
            theta=0.5,
        ),
    )
    with _stage("load-models"):
        if config.paths.get("task_model"):
            task = class_attack.load_task_model(config.paths["task_model"])
        else:
            task = planted.planted_task("task-fixed-length")
        timing = _timing_model(config, seed=derive_seed(config.seed, "fl", "timing"))
    sampler = InputSampler.uniform(50, 300)
    by_compliance = []
    traces = {}
    for compliance in k["compliances"]:
        with _stage(f"compliance-{compliance}"):
            variant = defense.fixed_length_transform(
                task, k["target_tokens"], float(compliance), sd=k["target_sd"]
            )
            train = class_attack.synth_task_trace(
                variant, k["train_per_class"], sampler,
                seed=derive_seed(config.seed, "fl", "train", compliance),
            )
            test = class_attack.synth_task_trace(
                variant, k["test_per_class"], sampler,
                seed=derive_seed(config.seed, "fl", "test", compliance),
                mode="non-streaming",
            )
            prof = class_attack.fit_threshold(list(train), theta=k["theta"], task=task.task)
            result = class_attack.evaluate_class_asr(prof, test)
            by_compliance.append([float(compliance), result.average])
            traces[float(compliance)] = test
    with _stage("penalties"):
        lo = min(traces)
        hi = max(traces)
        penalties = defense.penalty_report(
            simulate_each(timing, traces[lo]), simulate_each(timing, traces[hi])
        )
        report = defense.DefenseReport(
            defense="fixed-length",
            pre_asr=by_compliance[0][1],
            post_asr=by_compliance[-1][1],
            latency_penalty=max(0.0, penalties.latency_penalty),
            byte_padding=max(0.0, penalties.byte_padding),
        )
    return {"asr_by_compliance": by_compliance, "report": report.to_obj()}


def _scenario_defense_uniform_tokenizer(config: ExperimentConfig) -> dict:
    k = _knobs(
        config,
        dict(
            profiling_count=250,
            test_count=150,
            samples=30,
            predictions_per_label=40,
        ),
    )
    sampler = InputSampler.uniform(80, 300)
    with _stage("load-models"):
        density = _density_model(config)
        uniform = defense.uniform_tokenizer_model(density)
        timing = _timing_model(config, seed=derive_seed(config.seed, "ut", "timing"))
    results = {}
    traces = {}
    for name, model in (("pre", density), ("post", uniform)):
        with _stage(f"attack-{name}"):
            train = synth_multi(
                model, k["profiling_count"], sampler,
                seed=derive_seed(config.seed, "ut", name, "profiling"),
                mode="non-streaming", send_interval=60.0,
            )
            test = synth_multi(
                model, k["test_count"], sampler,
                seed=derive_seed(config.seed, "ut", name, "test"),
                mode="non-streaming", send_interval=60.0, id_prefix="t-",
            )
            profiles = lang_attack.fit_profile_set(train, "planted", "english")
            eval_seed = derive_seed(config.seed, "ut", name, "eval")
            results[name] = {
                feature: lang_attack.evaluate_asr(
                    profiles, test, k["samples"], k["predictions_per_label"],
                    feature=feature, seed=eval_seed,
                ).average
                for feature in ("both", "density", "ratio")
            }
            traces[name] = test
    with _stage("penalties"):
        penalties = defense.penalty_report(
            simulate_each(timing, traces["pre"]), simulate_each(timing, traces["post"])
        )
        report = defense.DefenseReport(
            defense="uniform-tokenizer",
            pre_asr=results["pre"]["density"],
            post_asr=results["post"]["density"],
            latency_penalty=max(0.0, penalties.latency_penalty),
            byte_padding=max(0.0, penalties.byte_padding),
        )
    return {
        "chance_level": 1.0 / len(_density_model(config).languages),
        "asr": results,
        "report": report.to_obj(),
    }


SCENARIOS = {
    "translation-planted": _scenario_translation_planted,
    "translation-timing": _scenario_translation_timing,
    "classification-planted": _scenario_classification_planted,
    "timing-drift": _scenario_timing_drift,
    "defense-padding": _scenario_defense_padding,
    "defense-fixed-length": _scenario_defense_fixed_length,
    "defense-uniform-tokenizer": _scenario_defense_uniform_tokenizer,
}


def run_scenario(config: ExperimentConfig) -> dict:
    """Execute one shipped scenario; deterministic for a fixed config."""
    if config.scenario not in SCENARIOS:
        raise ScenarioError(
            "dispatch",
            ValueError(
                f"unknown scenario {config.scenario!r}; "
                f"available: {sorted(SCENARIOS)}"
            ),
        )
    results = SCENARIOS[config.scenario](config)
    return _pyify(
        {
            "format": BUNDLE_FORMAT_TAG,
            "scenario": config.scenario,
            "config": config.to_obj(),
            "results": results,
        }
    )


def dump_bundle(bundle: dict) -> str:
    return json.dumps(bundle, sort_keys=True, indent=2) + "\n"


def write_bundle(bundle: dict, out_dir: str) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    bundle_path = os.path.join(out_dir, "bundle.json")
    report_path = os.path.join(out_dir, "report.txt")
    with open(bundle_path, "w", encoding="utf-8") as fh:
        fh.write(dump_bundle(bundle))
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report_render(bundle))
    return bundle_path, report_path


def load_bundle(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        bundle = json.load(fh)
    if not isinstance(bundle, dict) or bundle.get("format") != BUNDLE_FORMAT_TAG:
        raise ValueError(f"{path}: not a report bundle")
    return bundle


# ---------------------------------------------------------------- rendering


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def _pct(x: float) -> str:
    return f"{100.0 * x:.1f}"


def report_render(bundle: dict) -> str:
    """Human-readable rendering of a machine bundle."""
    if not bundle or "results" not in bundle or "scenario" not in bundle:
        raise ValueError("empty or malformed bundle")
    scenario = bundle["scenario"]
    results = bundle["results"]
    out = [f"scenario: {scenario}", f"seed: {bundle['config']['seed']}", ""]
    if scenario == "translation-planted":
        grid = sorted({int(k) for k in results["asr"]["both"]})
        headers = ["label"] + [f"prec@{k}" for k in grid]
        rows = []
        for label in results["labels"]:
            rows.append(
                [label]
                + [_pct(results["asr"]["both"][str(k)]["per_label"][label]) for k in grid]
            )
        rows.append(
            ["average"] + [_pct(results["asr"]["both"][str(k)]["average"]) for k in grid]
        )
        out.append("per-language precision (%) vs samples per prediction")
        out.append(_table(headers, rows))
        out.append("")
        out.append("feature ablation, average ASR (%)")
        out.append(
            _table(
                ["feature"] + [f"@{k}" for k in grid],
                [
                    [feat] + [_pct(v) for _, v in results["series"][feat]]
                    for feat in sorted(results["series"])
                ],
            )
        )
    elif scenario == "translation-timing":
        out.append(f"duration/token Pearson: {results['pearson']:.4f}")
        prof = results["network_profile"]
        out.append(
            f"network profile ({prof['strategy']}): ttft={prof['ttft_est']:.4f}s "
            f"tpot={prof['tpot_est']:.5f}s rtt={prof['rtt_est']:.4f}s"
        )
        out.append("")
        rows = [
            ["true tokens", _pct(results["asr_true"]["average"])],
            ["timing estimate", _pct(results["asr_timing"]["average"])],
            ["difference (points)", f"{results['delta_points']:.2f}"],
        ]
        out.append(_table(["attack input", "average ASR (%)"], rows))
    elif scenario == "classification-planted":
        shifts = sorted(results["average_by_shift"])
        rows = []
        for task in sorted(results["tasks"]):
            by_shift = results["tasks"][task]
            rows.append([task] + [_pct(by_shift[s]["test_asr"]) for s in shifts])
        rows.append(["average"] + [_pct(results["average_by_shift"][s]) for s in shifts])
        out.append("per-task ASR (%) by few-shot bias")
        out.append(_table(["task"] + shifts, rows))
    elif scenario == "timing-drift":
        strategies = sorted(results["asr_by_strategy"])
        headers = ["day", "load"] + strategies
        rows = []
        for day in results["days"]:
            rows.append(
                [str(day), f"{results['day_multipliers'][day]:.1f}x"]
                + [_pct(results["asr_by_strategy"][s][day]) for s in strategies]
            )
        out.append("per-day ASR (%) by profiling strategy")
        out.append(_table(headers, rows))
        if "profile_day" in results:
            picks = ", ".join(
                f"{s}=day {results['profile_day'][s]}"
                for s in sorted(results["profile_day"])
            )
            out.append(f"class profile selected per strategy: {picks}")
        out.append("")
        rows = [
            [s] + [f"{results['token_mae_by_strategy'][s][d]:.1f}" for d in results["days"]]
            for s in strategies
        ]
        out.append("per-day mean absolute token error")
        out.append(_table(["strategy"] + [f"day {d}" for d in results["days"]], rows))
    elif scenario in ("defense-padding", "defense-fixed-length", "defense-uniform-tokenizer"):
        report = results["report"]
        rows = [
            ["pre-defense ASR", _pct(report["pre_asr"])],
            ["post-defense ASR", _pct(report["post_asr"])],
            ["latency penalty", _pct(report["latency_penalty"])],
            ["byte padding", _pct(report["byte_padding"])],
        ]
        if "chance_level" in results:
            rows.append(["chance level", _pct(results["chance_level"])])
        out.append(f"defense: {report['defense']}")
        out.append(_table(["metric", "value (%)"], rows))
        if scenario == "defense-fixed-length":
            out.append("")
            out.append(
                _table(
                    ["compliance", "ASR (%)"],
                    [[f"{c:.2f}", _pct(a)] for c, a in results["asr_by_compliance"]],
                )
            )
        if scenario == "defense-uniform-tokenizer":
            out.append("")
            out.append(
                _table(
                    ["feature", "pre ASR (%)", "post ASR (%)"],
                    [
                        [f, _pct(results["asr"]["pre"][f]), _pct(results["asr"]["post"][f])]
                        for f in ("both", "density", "ratio")
                    ],
                )
            )
    else:
        out.append(json.dumps(results, sort_keys=True, indent=2))
    return "\n".join(out) + "\n"
