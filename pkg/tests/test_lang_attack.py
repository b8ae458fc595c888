import math

import numpy as np
import pytest
from scipy.integrate import quad

from tokenleak.density import InputSampler
from tokenleak.lang_attack import (
    ClassProfile2D,
    ProfileSet,
    bhattacharyya,
    evaluate_asr,
    fit_profile,
    fit_profile_set,
    gaussian_bhattacharyya,
    load_profile_set,
    predict_language,
    save_profile_set,
)
from tokenleak.planted import default_input_sampler, planted_translation_model
from tokenleak.density import synth_multi
from tokenleak.trace import ObservationRecord, Trace


def feature_record(density, ratio, rid="r0", label="x"):
    """Record whose derived features are exactly (density, ratio)."""
    tokens = 30
    out_bytes = density * tokens
    assert out_bytes == int(out_bytes)
    in_bytes = out_bytes / ratio
    assert in_bytes == int(in_bytes)
    return ObservationRecord(
        id=rid,
        label=label,
        input_bytes=int(in_bytes),
        output_bytes=int(out_bytes),
        output_tokens=tokens,
        t_send=0.0,
    )


def profile(label, mean, cov, count=100):
    return ClassProfile2D(
        label=label, mean=np.asarray(mean, float), cov=np.asarray(cov, float), sample_count=count
    )


def quadrature_distance_1d(m1, v1, m2, v2):
    def integrand(x):
        p = math.exp(-0.5 * (x - m1) ** 2 / v1) / math.sqrt(2 * math.pi * v1)
        q = math.exp(-0.5 * (x - m2) ** 2 / v2) / math.sqrt(2 * math.pi * v2)
        return math.sqrt(p * q)

    coeff, _ = quad(integrand, -60, 60, epsabs=1e-13, limit=200)
    return -math.log(coeff)


def quadrature_distance_diag(mean1, var1, mean2, var2):
    """Diagonal-covariance 2D distance via per-dimension quadrature."""
    return quadrature_distance_1d(mean1[0], var1[0], mean2[0], var2[0]) + (
        quadrature_distance_1d(mean1[1], var1[1], mean2[1], var2[1])
    )


class TestFitProfile:
    def test_identical_records_variance_collapses_to_ridge(self):
        recs = [feature_record(2, 1, rid=f"r{i}") for i in range(5)]
        prof = fit_profile(recs)
        assert prof.mean == pytest.approx([2.0, 1.0])
        assert prof.cov == pytest.approx(1e-9 * np.eye(2))
        assert prof.sample_count == 5

    def test_two_point_covariance_by_hand(self):
        recs = [feature_record(1, 1, rid="a"), feature_record(3, 3, rid="b")]
        prof = fit_profile(recs)
        eps = 1e-6 * 2.0
        assert prof.mean == pytest.approx([2.0, 2.0])
        expected = np.array([[2.0 + eps, 2.0], [2.0, 2.0 + eps]])
        assert np.allclose(prof.cov, expected, atol=1e-12)

    def test_estimator_consistency(self):
        rng = np.random.default_rng(4)
        mean = np.array([3.0, 1.5])
        cov = np.array([[0.09, 0.03], [0.03, 0.04]])
        draws = rng.multivariate_normal(mean, cov, size=1000)
        recs = []
        for i, (d, r) in enumerate(draws):
            tokens = 1000
            out_bytes = max(1, round(d * tokens))
            in_bytes = max(1, round(out_bytes / r))
            recs.append(
                ObservationRecord(
                    id=f"r{i}", label="x", input_bytes=in_bytes,
                    output_bytes=out_bytes, output_tokens=tokens, t_send=0.0,
                )
            )
        prof = fit_profile(recs)
        for j in range(2):
            se = math.sqrt(cov[j, j] / 1000)
            assert abs(prof.mean[j] - mean[j]) < 3 * se + 1e-3

    def test_diagonal_switch_zeroes_cross_terms(self):
        recs = [feature_record(1, 1, rid="a"), feature_record(3, 3, rid="b"),
                feature_record(2, 1, rid="c")]
        prof = fit_profile(recs, diagonal=True)
        assert prof.cov[0, 1] == 0.0
        assert prof.cov[1, 0] == 0.0
        full = fit_profile(recs)
        assert full.cov[0, 1] != 0.0

    def test_too_few_records(self):
        with pytest.raises(ValueError, match="at least 2"):
            fit_profile([feature_record(2, 1)])

    def test_mixed_labels(self):
        recs = [feature_record(2, 1, rid="a", label="x"), feature_record(2, 1, rid="b", label="y")]
        with pytest.raises(ValueError, match="mixed labels"):
            fit_profile(recs)


class TestBhattacharyya:
    def test_identical_profiles_exactly_zero(self):
        p = profile("a", [2.0, 1.0], [[0.3, 0.1], [0.1, 0.2]])
        q = profile("b", [2.0, 1.0], [[0.3, 0.1], [0.1, 0.2]])
        assert bhattacharyya(p, q) == 0.0

    def test_1d_unit_variance_means_two_apart(self):
        # closed form: (1/8) * 4 / 1 = 0.5 with no determinant term
        d = gaussian_bhattacharyya(np.array([0.0]), np.array([[1.0]]), np.array([2.0]), np.array([[1.0]]))
        assert d == pytest.approx(0.5, abs=1e-12)
        assert d == pytest.approx(quadrature_distance_1d(0.0, 1.0, 2.0, 1.0), abs=1e-8)

    def test_closed_form_matches_quadrature_on_random_diagonal_pairs(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            m1 = rng.uniform(-3, 3, 2)
            m2 = rng.uniform(-3, 3, 2)
            v1 = rng.uniform(0.1, 4.0, 2)
            v2 = rng.uniform(0.1, 4.0, 2)
            closed = gaussian_bhattacharyya(m1, np.diag(v1), m2, np.diag(v2))
            numeric = quadrature_distance_diag(m1, v1, m2, v2)
            assert closed == pytest.approx(numeric, abs=1e-6)

    def test_symmetric_and_nonnegative(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            m1, m2 = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
            a = rng.uniform(0.2, 2.0, 2)
            c1 = np.diag(a) + 0.05
            b = rng.uniform(0.2, 2.0, 2)
            c2 = np.diag(b) + 0.02
            d12 = gaussian_bhattacharyya(m1, c1, m2, c2)
            d21 = gaussian_bhattacharyya(m2, c2, m1, c1)
            assert d12 == pytest.approx(d21, abs=1e-12)
            assert d12 >= 0.0

    def test_masked_distance_uses_marginal(self):
        p = profile("a", [2.0, 1.0], [[1.0, 0.0], [0.0, 1.0]])
        q = profile("b", [4.0, 1.0], [[1.0, 0.0], [0.0, 1.0]])
        assert bhattacharyya(p, q, feature="density") == pytest.approx(0.5)
        assert bhattacharyya(p, q, feature="ratio") == 0.0


def far_separated_profiles():
    cov = np.diag([0.01, 0.01])
    return ProfileSet(
        model_name="planted",
        source_language="english",
        profiles={
            "alpha": profile("alpha", [2.0, 1.0], cov),
            "beta": profile("beta", [8.0, 3.0], cov),
        },
    )


class TestPredictLanguage:
    def test_samples_at_profile_mean(self):
        profiles = far_separated_profiles()
        rng = np.random.default_rng(3)
        recs = []
        for i in range(20):
            d = 2.0 + rng.normal(0, 0.1)
            tokens = 1000
            out_bytes = max(1, round(d * tokens))
            recs.append(
                ObservationRecord(
                    id=f"s{i}", label=None, input_bytes=out_bytes,
                    output_bytes=out_bytes, output_tokens=tokens, t_send=0.0,
                )
            )
        assert predict_language(profiles, recs) == "alpha"

    def test_far_separated_50_samples_always_correct(self):
        model_params = {
            "alpha": (2.0, 1.0),
            "beta": (8.0, 3.0),
        }
        from tokenleak.density import DensityModel, LanguageParams

        model = DensityModel(
            languages={
                k: LanguageParams(v[0], 0.1, v[1], 0.1, 0.0) for k, v in model_params.items()
            }
        )
        train = synth_multi(model, 200, InputSampler.fixed(200), seed=21)
        profiles = fit_profile_set(train, "planted", "english")
        test = synth_multi(model, 100, InputSampler.fixed(200), seed=22)
        correct = 0
        for lang in ("alpha", "beta"):
            pool = test.by_label(lang)
            for trial in range(50):
                rng = np.random.default_rng(1000 + trial)
                picked = [pool[i] for i in rng.choice(len(pool), 50, replace=False)]
                correct += predict_language(profiles, picked) == lang
        assert correct == 100

    def test_identical_profiles_split_roughly_even(self):
        model_params = (3.0, 0.4, 1.2, 0.15)
        from tokenleak.density import DensityModel, LanguageParams

        model = DensityModel(
            languages={
                "one": LanguageParams(*model_params),
                "two": LanguageParams(*model_params),
            }
        )
        train = synth_multi(model, 400, InputSampler.fixed(200), seed=31)
        profiles = fit_profile_set(train, "planted", "english")
        test = synth_multi(model, 200, InputSampler.fixed(200), seed=32)
        result = evaluate_asr(profiles, test, samples_per_prediction=10,
                              predictions_per_label=100, seed=33)
        assert result.average == pytest.approx(0.5, abs=0.10)

    def test_single_sample_uses_log_density(self):
        profiles = far_separated_profiles()
        rec = feature_record(8, 3, label=None)
        assert predict_language(profiles, [rec]) == "beta"

    def test_empty_samples(self):
        with pytest.raises(ValueError, match="empty"):
            predict_language(far_separated_profiles(), [])

    def test_more_than_fifty_samples_rejected(self):
        recs = [feature_record(2, 1, rid=f"r{i}", label=None) for i in range(51)]
        with pytest.raises(ValueError, match="at most 50"):
            predict_language(far_separated_profiles(), recs)

    def test_order_invariant(self):
        profiles = far_separated_profiles()
        rng = np.random.default_rng(8)
        recs = []
        for i in range(10):
            d = 5.0 + rng.normal(0, 2.0)
            tokens = 100
            out_bytes = max(1, round(d * tokens))
            recs.append(
                ObservationRecord(
                    id=f"s{i}", label=None, input_bytes=max(1, out_bytes // 2),
                    output_bytes=out_bytes, output_tokens=tokens, t_send=0.0,
                )
            )
        a = predict_language(profiles, recs)
        b = predict_language(profiles, list(reversed(recs)))
        assert a == b

    def test_ratio_only_prediction_invariant_to_byte_scaling(self):
        # scaling all byte lengths by a constant preserves io_ratio but not
        # density, so only the ratio-masked channel is invariant
        from dataclasses import replace

        model = planted_translation_model()
        train = synth_multi(model, 200, default_input_sampler(), seed=81)
        profiles = fit_profile_set(train, "planted", "english")
        test = synth_multi(model, 80, default_input_sampler(), seed=82)
        rng = np.random.default_rng(83)
        picked = [test.records[i] for i in rng.choice(len(test), 25, replace=False)]
        scaled = [
            replace(r, input_bytes=3 * r.input_bytes, output_bytes=3 * r.output_bytes)
            for r in picked
        ]
        assert predict_language(profiles, picked, feature="ratio") == predict_language(
            profiles, scaled, feature="ratio"
        )

    def test_tie_breaks_lexicographically(self):
        cov = np.diag([0.04, 0.04])
        profiles = ProfileSet(
            model_name="m", source_language="s",
            profiles={
                "zeta": profile("zeta", [2.0, 1.0], cov),
                "alpha": profile("alpha", [2.0, 1.0], cov),
            },
        )
        rec = feature_record(2, 1, label=None)
        assert predict_language(profiles, [rec]) == "alpha"


class TestEvaluateAsr:
    def test_perfectly_separated(self):
        from tokenleak.density import DensityModel, LanguageParams

        model = DensityModel(
            languages={
                "alpha": LanguageParams(2.0, 0.05, 1.0, 0.05, 0.0),
                "beta": LanguageParams(8.0, 0.05, 3.0, 0.05, 0.0),
            }
        )
        train = synth_multi(model, 200, InputSampler.fixed(300), seed=41)
        profiles = fit_profile_set(train, "p", "en")
        test = synth_multi(model, 100, InputSampler.fixed(300), seed=42)
        result = evaluate_asr(profiles, test, samples_per_prediction=10,
                              predictions_per_label=50, seed=43)
        assert result.average == 1.0
        assert all(v == 1.0 for v in result.per_label.values())

    def test_combined_beats_single_features_on_planted_benchmark(self):
        model = planted_translation_model()
        train = synth_multi(model, 300, default_input_sampler(), seed=51)
        profiles = fit_profile_set(train, "planted", "english")
        test = synth_multi(model, 150, default_input_sampler(), seed=52)
        asr = {
            feat: evaluate_asr(
                profiles, test, samples_per_prediction=30,
                predictions_per_label=40, feature=feat, seed=53
            ).average
            for feat in ("both", "density", "ratio")
        }
        assert asr["both"] >= max(asr["density"], asr["ratio"])

    def test_duplicated_profile_splits_precision(self):
        from tokenleak.density import DensityModel, LanguageParams

        model = DensityModel(
            languages={
                "dup1": LanguageParams(3.0, 0.3, 1.2, 0.1, 0.0),
                "dup2": LanguageParams(3.0, 0.3, 1.2, 0.1, 0.0),
                "far": LanguageParams(8.0, 0.3, 3.0, 0.1, 0.0),
            }
        )
        train = synth_multi(model, 400, InputSampler.fixed(200), seed=61)
        profiles = fit_profile_set(train, "p", "en")
        test = synth_multi(model, 200, InputSampler.fixed(200), seed=62)
        result = evaluate_asr(profiles, test, samples_per_prediction=20,
                              predictions_per_label=100, seed=63)
        assert result.per_label["dup1"] == pytest.approx(0.5, abs=0.12)
        assert result.per_label["dup2"] == pytest.approx(0.5, abs=0.12)
        assert result.per_label["far"] == 1.0

    def test_sample_count_out_of_range(self):
        profiles = far_separated_profiles()
        trace = Trace(mode="streaming", records=(feature_record(2, 1, label="alpha"),))
        with pytest.raises(ValueError, match="1..50"):
            evaluate_asr(profiles, trace, samples_per_prediction=0)
        with pytest.raises(ValueError, match="1..50"):
            evaluate_asr(profiles, trace, samples_per_prediction=51)


class TestProfileFile:
    def test_round_trip(self, tmp_path):
        model = planted_translation_model()
        train = synth_multi(model, 50, default_input_sampler(), seed=71)
        profiles = fit_profile_set(train, "planted", "english")
        p = tmp_path / "p.profiles"
        save_profile_set(profiles, str(p))
        loaded = load_profile_set(str(p))
        assert loaded.model_name == "planted"
        assert loaded.labels() == profiles.labels()
        for label in profiles.labels():
            a, b = loaded.profiles[label], profiles.profiles[label]
            assert a.mean == pytest.approx(b.mean)
            assert a.cov == pytest.approx(b.cov)
            assert a.sample_count == b.sample_count

    def test_needs_two_profiles(self):
        with pytest.raises(ValueError, match="at least 2"):
            ProfileSet(model_name="m", source_language="s",
                       profiles={"only": profile("only", [1, 1], np.eye(2))})
