import numpy as np
import pytest

from tokenleak.class_attack import evaluate_class_asr, fit_threshold, synth_task_trace
from tokenleak.defense import (
    DefenseReport,
    fixed_length_transform,
    pad_trace,
    penalty_report,
    save_defense_report,
    uniform_tokenizer_model,
)
from tokenleak.density import DensityModel, InputSampler, LanguageParams, synth_multi
from tokenleak.lang_attack import evaluate_asr, fit_profile_set
from tokenleak.planted import (
    korean_heavy_model,
    local_timing_model,
    planted_task,
    planted_translation_model,
)
from tokenleak.servesim import simulate_each
from tokenleak.trace import Trace


def lang_benchmark(model, seed, profiling=250, test=150):
    sampler = InputSampler.uniform(80, 300)
    train = synth_multi(model, profiling, sampler, seed=seed, send_interval=30.0)
    test_trace = synth_multi(model, test, sampler, seed=seed + 1, send_interval=30.0,
                             id_prefix="t-")
    return train, test_trace


class TestPadTrace:
    def test_already_at_max_is_identity_on_lengths(self):
        model = DensityModel(languages={"x": LanguageParams(2.0, 0.0, 1.0, 0.0)})
        trace = synth_multi(model, 20, InputSampler.fixed(100), seed=1, send_interval=60.0)
        timing = local_timing_model(seed=2)
        padded = pad_trace(trace, trace, timing)
        for before, after in zip(trace, padded):
            assert after.output_tokens == before.output_tokens
            assert after.output_bytes == before.output_bytes

    def test_mean_token_inflation_about_100_percent(self):
        model = DensityModel(
            languages={
                "short": LanguageParams(2.0, 0.001, 1.0, 0.001),
                "long": LanguageParams(1.0, 0.001, 1.0, 0.001),
            }
        )
        trace = synth_multi(model, 100, InputSampler.fixed(200), seed=3, send_interval=60.0)
        timing = local_timing_model(seed=4)
        padded = pad_trace(trace, trace, timing)
        before = np.mean([r.output_tokens for r in trace.by_label("short")])
        after = np.mean(
            [r.output_tokens for r in padded if r.id in {x.id for x in trace.by_label("short")}]
        )
        assert after / before == pytest.approx(2.0, rel=0.02)

    def test_never_decreases_anything(self):
        model = planted_translation_model()
        trace = synth_multi(model, 60, InputSampler.uniform(80, 300), seed=5,
                            send_interval=200.0)
        timing = local_timing_model(seed=6)
        simulated = simulate_each(timing, trace)
        padded = pad_trace(simulated, simulated, timing)
        for before, after in zip(simulated, padded):
            assert after.output_tokens >= before.output_tokens
            assert after.output_bytes >= before.output_bytes
            assert after.duration >= before.duration - 1e-12

    def test_post_padding_asr_near_chance(self):
        model = planted_translation_model()
        train, test = lang_benchmark(model, seed=7)
        timing = local_timing_model(seed=8)
        pre_profiles = fit_profile_set(train, "planted", "english")
        pre = evaluate_asr(pre_profiles, test, 30, predictions_per_label=40, seed=9)
        padded_train = pad_trace(train, train, timing)
        padded_test = pad_trace(test, train, timing)
        post_profiles = fit_profile_set(padded_train, "planted", "english")
        post = evaluate_asr(post_profiles, padded_test, 30, predictions_per_label=40, seed=9)
        k = len(model.languages)
        assert pre.average > 0.8
        assert abs(post.average - 1.0 / k) <= 0.05
        assert post.average <= pre.average + 0.03

    def test_empty_trace(self):
        timing = local_timing_model(seed=1)
        empty = Trace(mode="streaming", records=())
        with pytest.raises(ValueError, match="empty"):
            pad_trace(empty, empty, timing)

    def test_global_rule_pads_to_global_max(self):
        model = planted_translation_model()
        trace = synth_multi(model, 40, InputSampler.uniform(80, 300), seed=10,
                            send_interval=200.0)
        timing = local_timing_model(seed=11)
        padded = pad_trace(trace, trace, timing, rule="global")
        target = max(r.output_tokens for r in trace)
        assert all(r.output_tokens == target for r in padded)


class TestPenaltyReport:
    def test_noop_padding_zero_penalties(self):
        model = DensityModel(languages={"x": LanguageParams(2.0, 0.0, 1.0, 0.0)})
        trace = synth_multi(model, 20, InputSampler.fixed(100), seed=12, send_interval=60.0)
        timing = local_timing_model(seed=13)
        simulated = simulate_each(timing, trace)
        padded = pad_trace(simulated, simulated, timing)
        rep = penalty_report(simulated, padded)
        assert rep.latency_penalty == pytest.approx(0.0, abs=1e-9)
        assert rep.byte_padding == pytest.approx(0.0, abs=1e-9)

    def test_korean_heavy_latency_matches_analytic_expectation(self):
        model = korean_heavy_model()
        timing = local_timing_model(seed=14)
        sampler = InputSampler.fixed(200)
        trace = synth_multi(model, 500, sampler, seed=15, send_interval=60.0)
        simulated = simulate_each(timing, trace)
        padded = pad_trace(simulated, simulated, timing)
        rep = penalty_report(simulated, padded)

        # analytic: mean tokens per language from the planted means, everyone
        # padded up to the heaviest language's count
        mean_tokens = {
            name: 200.0 * p.mean_ratio / p.mean_density
            for name, p in model.languages.items()
        }
        base = 2 * timing.net_delay_oneway + timing.ttft_mean
        orig = base + timing.tpot_mean * np.mean(list(mean_tokens.values()))
        pad = base + timing.tpot_mean * max(mean_tokens.values())
        analytic = pad / orig - 1.0
        assert rep.latency_penalty == pytest.approx(analytic, abs=0.02)

    def test_uniform_model_penalties_near_zero(self):
        model = DensityModel(
            languages={
                name: LanguageParams(2.0, 0.002, 1.0, 0.001)
                for name in ("a", "b", "c")
            }
        )
        timing = local_timing_model(seed=16)
        trace = synth_multi(model, 200, InputSampler.fixed(200), seed=17, send_interval=60.0)
        simulated = simulate_each(timing, trace)
        padded = pad_trace(simulated, simulated, timing)
        rep = penalty_report(simulated, padded)
        assert rep.latency_penalty < 0.03
        assert rep.byte_padding < 0.03


class TestFixedLengthTransform:
    def run_attack(self, task, seed):
        train = synth_task_trace(task, 120, InputSampler.uniform(50, 300), seed=seed)
        test = synth_task_trace(task, 250, InputSampler.uniform(50, 300), seed=seed + 1)
        prof = fit_threshold(list(train))
        return evaluate_class_asr(prof, test).average

    def test_full_compliance_near_chance(self):
        task = fixed_length_transform(planted_task(), 60.0, compliance=1.0)
        assert self.run_attack(task, 20) == pytest.approx(0.5, abs=0.05)

    def test_zero_compliance_identity(self):
        task = planted_task()
        transformed = fixed_length_transform(task, 60.0, compliance=0.0)
        t1 = synth_task_trace(task, 50, InputSampler.uniform(50, 300), seed=22)
        t2 = synth_task_trace(transformed, 50, InputSampler.uniform(50, 300), seed=22)
        assert t1.records == t2.records

    def test_half_compliance_strictly_between(self):
        task = planted_task()
        asr_none = self.run_attack(task, 24)
        asr_half = self.run_attack(fixed_length_transform(task, 60.0, 0.5), 24)
        asr_full = self.run_attack(fixed_length_transform(task, 60.0, 1.0), 24)
        assert asr_full < asr_half < asr_none

    def test_compliance_range(self):
        with pytest.raises(ValueError, match="compliance"):
            fixed_length_transform(planted_task(), 60.0, 1.5)


class TestUniformTokenizerModel:
    def test_already_uniform_identity(self):
        model = DensityModel(
            languages={
                "a": LanguageParams(2.0, 0.1, 1.0, 0.1),
                "b": LanguageParams(2.0, 0.1, 1.5, 0.2),
            }
        )
        out = uniform_tokenizer_model(model)
        for name in model.languages:
            assert out.languages[name].mean_density == pytest.approx(2.0)
            assert out.languages[name].sd_density == pytest.approx(0.1)
            assert out.languages[name].mean_ratio == model.languages[name].mean_ratio

    def test_density_only_asr_drops_to_chance(self):
        model = uniform_tokenizer_model(planted_translation_model())
        train, test = lang_benchmark(model, seed=30)
        profiles = fit_profile_set(train, "planted", "english")
        k = len(model.languages)
        density_only = evaluate_asr(profiles, test, 30, predictions_per_label=40,
                                    feature="density", seed=31)
        assert abs(density_only.average - 1.0 / k) <= 0.06

    def test_combined_still_leaks_through_ratio(self):
        model = uniform_tokenizer_model(planted_translation_model())
        train, test = lang_benchmark(model, seed=32)
        profiles = fit_profile_set(train, "planted", "english")
        k = len(model.languages)
        combined = evaluate_asr(profiles, test, 30, predictions_per_label=40, seed=33)
        assert combined.average > 1.0 / k + 0.1


class TestDefenseReport:
    def test_bounds(self):
        with pytest.raises(ValueError):
            DefenseReport("pad", pre_asr=1.2, post_asr=0.5, latency_penalty=0.1, byte_padding=0.1)
        with pytest.raises(ValueError):
            DefenseReport("pad", pre_asr=0.9, post_asr=0.5, latency_penalty=-0.1, byte_padding=0.1)

    def test_save(self, tmp_path):
        import json

        rep = DefenseReport("pad", 0.9, 0.22, 0.6, 0.4)
        p = tmp_path / "report.json"
        save_defense_report(rep, str(p))
        obj = json.loads(p.read_text())
        assert obj["defense"] == "pad"
        assert obj["post_asr"] == 0.22
