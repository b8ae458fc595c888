"""Command-line entry point wiring traces, models, attacks, and defenses.

Subcommands: `lang fit|attack|asr`, `cls fit|attack|asr`,
`timing estimate|pearson`, `simulate`, `defend`, `scenario run|render`,
plus `synth` for generating planted traces. Environment variables are never
consulted; everything an invocation does is determined by its arguments.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from tokenleak import class_attack, defense, lang_attack, servesim, timing_recovery
from tokenleak.density import InputSampler, load_density_model, save_density_model, synth_multi
from tokenleak.scenarios import (
    ExperimentConfig,
    load_bundle,
    report_render,
    run_scenario,
    write_bundle,
)
from tokenleak.seeding import rng_for
from tokenleak.trace import load_trace, save_trace


def _sampler(text: str) -> InputSampler:
    parts = text.split(":")
    try:
        if parts[0] == "fixed":
            return InputSampler.fixed(int(parts[1]))
        if parts[0] == "uniform":
            return InputSampler.uniform(int(parts[1]), int(parts[2]))
        if parts[0] == "normal":
            return InputSampler.normal(float(parts[1]), float(parts[2]))
    except (IndexError, ValueError):
        pass
    raise argparse.ArgumentTypeError(
        f"bad input spec {text!r}; use fixed:N, uniform:LO:HI, or normal:MEAN:SD"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokenleak",
        description="Output-token-count side-channel workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    lang = sub.add_parser("lang", help="translation-language attack")
    lang_sub = lang.add_subparsers(dest="subcommand", required=True)
    p = lang_sub.add_parser("fit", help="fit per-language profiles from a labeled trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model-name", default="")
    p.add_argument("--source", default="")
    p.add_argument("--diagonal", action="store_true",
                   help="force independent features (ablation)")
    p = lang_sub.add_parser("attack", help="predict the language of a sample trace")
    p.add_argument("--profiles", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--feature", choices=lang_attack.FEATURES, default="both")
    p.add_argument("--seed", type=int, default=0)
    p = lang_sub.add_parser("asr", help="per-language precision over a labeled trace")
    p.add_argument("--profiles", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--predictions", type=int, default=50)
    p.add_argument("--feature", choices=lang_attack.FEATURES, default="both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", dest="json_out", default=None)

    cls = sub.add_parser("cls", help="classification-class attack")
    cls_sub = cls.add_subparsers(dest="subcommand", required=True)
    p = cls_sub.add_parser("fit", help="fit the token-count threshold from a labeled trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--task", default="")
    p = cls_sub.add_parser("attack", help="predict classes for every record")
    p.add_argument("--profile", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--json", dest="json_out", default=None)
    p = cls_sub.add_parser("asr", help="per-class precision over a labeled trace")
    p.add_argument("--profile", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--json", dest="json_out", default=None)

    timing = sub.add_parser("timing", help="token-count recovery from timing")
    timing_sub = timing.add_subparsers(dest="subcommand", required=True)
    p = timing_sub.add_parser("estimate", help="estimate token counts for a timed trace")
    p.add_argument("--strategy", choices=timing_recovery.STRATEGIES, default="naive")
    p.add_argument("--probes", action="append", required=True,
                   help="probe trace; repeat for the averaged strategy")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pings", default=None, help="JSON file with a list of RTT seconds")
    p.add_argument("--rtt", type=float, default=None, help="fixed RTT estimate")
    p.add_argument("--no-intercept", action="store_true",
                   help="pure-proportionality regression")
    p.add_argument("--round-interval", type=float, default=60.0)
    p.add_argument("--proportional", action="store_true",
                   help="emit bytes-per-second density surrogates (JSON) instead "
                        "of a token-count trace")
    p = timing_sub.add_parser("pearson", help="duration/token-count correlation")
    p.add_argument("--trace", required=True)

    p = sub.add_parser("simulate", help="timestamp a trace through the serving simulator")
    p.add_argument("--model", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--independent", action="store_true",
                   help="serve records in isolation instead of the batch-one queue")

    p = sub.add_parser("defend", help="run a defense scenario and emit its report")
    p.add_argument("--defense", choices=["pad", "fixed-length", "uniform-tokenizer"],
                   required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--density", default=None, help="density model file")
    p.add_argument("--timing", default=None, help="timing model file")
    p.add_argument("--task", default=None, help="task model file")
    p.add_argument("--rule", choices=defense.PAD_RULES, default="windowed")
    p.add_argument("--compliance", type=float, action="append", default=None)
    p.add_argument("--target", type=float, default=60.0)

    scenario = sub.add_parser("scenario", help="shipped end-to-end experiments")
    scenario_sub = scenario.add_subparsers(dest="subcommand", required=True)
    p = scenario_sub.add_parser("run", help="run a scenario from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p = scenario_sub.add_parser("render", help="render a bundle as text")
    p.add_argument("--bundle", required=True)

    synth = sub.add_parser("synth", help="generate planted traces")
    synth_sub = synth.add_subparsers(dest="subcommand", required=True)
    p = synth_sub.add_parser("lang", help="labeled multi-language trace from a density model")
    p.add_argument("--density", required=True)
    p.add_argument("--count", type=int, default=100, help="records per language")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["streaming", "non-streaming"], default="streaming")
    p.add_argument("--input", type=_sampler, default="uniform:80:300",
                   help="fixed:N | uniform:LO:HI | normal:MEAN:SD")
    p.add_argument("--interval", type=float, default=30.0)
    p = synth_sub.add_parser("task", help="labeled two-class trace from a task model")
    p.add_argument("--task", required=True)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["streaming", "non-streaming"], default="streaming")
    p.add_argument("--input", type=_sampler, default="uniform:50:300")
    p.add_argument("--bias", choices=["augment", "diminish", "none"], default="none",
                   help="shift the class gap relative to the task's inherent bias")
    p.add_argument("--magnitude", type=float, default=0.5)
    p = synth_sub.add_parser("models", help="write the shipped planted model files")
    p.add_argument("--out-dir", required=True)
    return parser


def _cmd_lang(args) -> int:
    if args.subcommand == "fit":
        trace = load_trace(args.trace)
        profiles = lang_attack.fit_profile_set(
            trace, args.model_name, args.source, diagonal=args.diagonal
        )
        lang_attack.save_profile_set(profiles, args.out)
        print(f"fitted {len(profiles.profiles)} profiles -> {args.out}")
    elif args.subcommand == "attack":
        profiles = lang_attack.load_profile_set(args.profiles)
        trace = load_trace(args.trace)
        records = list(trace)
        if args.samples < len(records):
            rng = rng_for(args.seed, "cli-attack")
            idx = rng.choice(len(records), size=args.samples, replace=False)
            records = [records[i] for i in idx]
        prediction = lang_attack.predict_language(profiles, records, feature=args.feature)
        print(json.dumps({"prediction": prediction, "samples": len(records)}))
    else:
        profiles = lang_attack.load_profile_set(args.profiles)
        trace = load_trace(args.trace)
        result = lang_attack.evaluate_asr(
            profiles, trace, args.samples, args.predictions,
            feature=args.feature, seed=args.seed,
        )
        if args.json_out:
            with open(args.json_out, "w", encoding="utf-8") as fh:
                json.dump(result.to_obj(), fh, sort_keys=True, indent=2)
                fh.write("\n")
        for label in profiles.labels():
            print(f"{label}\t{100 * result.per_label[label]:.1f}")
        print(f"average\t{100 * result.average:.1f}")
    return 0


def _cmd_cls(args) -> int:
    if args.subcommand == "fit":
        trace = load_trace(args.trace)
        profile = class_attack.fit_threshold(list(trace), theta=args.theta, task=args.task)
        class_attack.save_threshold(profile, args.out)
        print(
            f"threshold: tokens > {profile.alpha:.6g} * input_bytes + {profile.beta:.6g}"
            f" -> {profile.labels[1]!r} (train ASR {100 * profile.train_asr:.1f}%)"
        )
    elif args.subcommand == "attack":
        profile = class_attack.load_threshold(args.profile)
        trace = load_trace(args.trace)
        predictions = {rec.id: class_attack.predict_class(profile, rec) for rec in trace}
        if args.json_out:
            with open(args.json_out, "w", encoding="utf-8") as fh:
                json.dump(predictions, fh, sort_keys=True, indent=2)
                fh.write("\n")
        for rid, label in predictions.items():
            print(f"{rid}\t{label}")
    else:
        profile = class_attack.load_threshold(args.profile)
        trace = load_trace(args.trace)
        result = class_attack.evaluate_class_asr(profile, trace)
        if args.json_out:
            with open(args.json_out, "w", encoding="utf-8") as fh:
                json.dump(result.to_obj(), fh, sort_keys=True, indent=2)
                fh.write("\n")
        for label in profile.labels:
            print(f"{label}\t{100 * result.per_class[label]:.1f}")
        print(f"average\t{100 * result.average:.1f}")
    return 0


def _cmd_timing(args) -> int:
    if args.subcommand == "pearson":
        trace = load_trace(args.trace)
        print(f"{timing_recovery.trace_pearson(trace):.6f}")
        return 0
    probes = [load_trace(p) for p in args.probes]
    if args.pings is not None:
        with open(args.pings, "r", encoding="utf-8") as fh:
            pings = [float(x) for x in json.load(fh)]
    elif args.rtt is not None:
        pings = [args.rtt]
    else:
        pings = []
    profile = timing_recovery.build_profile(
        args.strategy,
        probes if args.strategy == "averaged" else probes[0],
        pings,
        round_interval=args.round_interval,
        fit_intercept=not args.no_intercept,
    )
    trace = load_trace(args.trace)
    if args.proportional:
        surrogates = {
            rec.id: timing_recovery.estimate_density(profile, rec, proportional=True)
            for rec in trace
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(surrogates, fh, sort_keys=True, indent=2)
            fh.write("\n")
        print(f"wrote {len(surrogates)} density surrogates -> {args.out}")
        return 0
    estimated, flagged = timing_recovery.estimate_trace(profile, trace)
    save_trace(estimated, args.out)
    print(
        f"estimated {len(estimated)} records ({len(flagged)} clamped) "
        f"with ttft={profile.ttft_est:.4f}s tpot={profile.tpot_est:.5f}s "
        f"rtt={profile.rtt_est:.4f}s -> {args.out}"
    )
    return 0


def _cmd_simulate(args) -> int:
    model = servesim.load_timing_model(args.model)
    trace = load_trace(args.trace)
    out = (servesim.simulate_each if args.independent else servesim.simulate_batch)(
        model, trace
    )
    save_trace(out, args.out)
    print(f"simulated {len(out)} records -> {args.out}")
    return 0


def _cmd_defend(args) -> int:
    scenario = {
        "pad": "defense-padding",
        "fixed-length": "defense-fixed-length",
        "uniform-tokenizer": "defense-uniform-tokenizer",
    }[args.defense]
    knobs: dict = {}
    if args.defense == "pad":
        knobs["rule"] = args.rule
    if args.defense == "fixed-length":
        knobs["target_tokens"] = args.target
        if args.compliance:
            knobs["compliances"] = sorted(args.compliance)
    config = ExperimentConfig(
        seed=args.seed,
        scenario=scenario,
        knobs=knobs,
        paths={
            "density_model": args.density,
            "timing_model": args.timing,
            "task_model": args.task,
        },
    )
    bundle = run_scenario(config)
    bundle_path, report_path = write_bundle(bundle, args.out)
    report = defense.DefenseReport(
        defense=bundle["results"]["report"]["defense"],
        pre_asr=bundle["results"]["report"]["pre_asr"],
        post_asr=bundle["results"]["report"]["post_asr"],
        latency_penalty=bundle["results"]["report"]["latency_penalty"],
        byte_padding=bundle["results"]["report"]["byte_padding"],
    )
    report_json = os.path.join(args.out, "defense_report.json")
    defense.save_defense_report(report, report_json)
    print(defense.format_defense_report(report))
    print(f"\nwrote {bundle_path}, {report_path}, {report_json}")
    return 0


def _cmd_scenario(args) -> int:
    if args.subcommand == "run":
        config = ExperimentConfig.from_file(args.config)
        bundle = run_scenario(config)
        bundle_path, report_path = write_bundle(bundle, args.out)
        sys.stdout.write(report_render(bundle))
        print(f"wrote {bundle_path}, {report_path}")
    else:
        bundle = load_bundle(args.bundle)
        sys.stdout.write(report_render(bundle))
    return 0


def _cmd_synth(args) -> int:
    if args.subcommand == "models":
        from tokenleak import planted

        os.makedirs(args.out_dir, exist_ok=True)
        written = []
        for name, writer in (
            ("planted_translation.density", lambda p: save_density_model(
                planted.planted_translation_model(), p)),
            ("korean_heavy.density", lambda p: save_density_model(
                planted.korean_heavy_model(), p)),
            ("planted.task", lambda p: class_attack.save_task_model(
                planted.planted_task(), p)),
            ("local.timing", lambda p: servesim.save_timing_model(
                planted.local_timing_model(seed=0, noisy=True), p)),
            ("congested_api.timing", lambda p: servesim.save_timing_model(
                planted.congested_api_model(seed=0), p)),
        ):
            path = os.path.join(args.out_dir, name)
            writer(path)
            written.append(path)
        print("\n".join(written))
        return 0
    if args.subcommand == "lang":
        model = load_density_model(args.density)
        trace = synth_multi(
            model, args.count, args.input, seed=args.seed,
            mode=args.mode, send_interval=args.interval,
        )
    else:
        task = class_attack.load_task_model(args.task)
        shift = {"augment": "augmenting", "diminish": "diminishing", "none": "unbiased"}
        task = class_attack.bias_transform(task, shift[args.bias], args.magnitude)
        trace = class_attack.synth_task_trace(
            task, args.per_class, args.input, seed=args.seed, mode=args.mode
        )
    save_trace(trace, args.out)
    print(f"wrote {len(trace)} records -> {args.out}")
    return 0


_DISPATCH = {
    "lang": _cmd_lang,
    "cls": _cmd_cls,
    "timing": _cmd_timing,
    "simulate": _cmd_simulate,
    "defend": _cmd_defend,
    "scenario": _cmd_scenario,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except Exception as e:  # noqa: BLE001 - single reporting point for the CLI
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
