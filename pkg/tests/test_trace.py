import json

import pytest

from tokenleak.trace import (
    ObservationRecord,
    Trace,
    TraceFormatError,
    derive_features,
    dump_trace,
    load_trace,
    save_trace,
)


def make_record(**kw):
    base = dict(
        id="r0",
        label="french",
        input_bytes=60,
        output_bytes=120,
        output_tokens=40,
        t_send=0.0,
        t_first=None,
        t_done=None,
    )
    base.update(kw)
    return ObservationRecord(**base)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def header(mode="streaming"):
    return json.dumps({"format": "tokenleak-trace/1", "mode": mode})


def record_line(**kw):
    obj = dict(
        id="r0",
        label="french",
        input_bytes=60,
        output_bytes=120,
        output_tokens=40,
        t_send=0.0,
        t_first=None,
        t_done=None,
    )
    obj.update(kw)
    return json.dumps(obj)


class TestRecordInvariants:
    def test_valid_record(self):
        rec = make_record()
        assert rec.output_tokens == 40

    def test_timestamp_ordering_t_first_before_send(self):
        with pytest.raises(ValueError, match="t_send <= t_first"):
            make_record(t_send=1.0, t_first=0.5, t_done=2.0)

    def test_timestamp_ordering_t_done_before_first(self):
        with pytest.raises(ValueError, match="ordering"):
            make_record(t_send=0.0, t_first=1.0, t_done=0.5)

    def test_unusable_record_rejected(self):
        with pytest.raises(ValueError, match="unusable"):
            make_record(output_tokens=None, t_done=None)

    def test_bounds(self):
        with pytest.raises(ValueError):
            make_record(input_bytes=0)
        with pytest.raises(ValueError):
            make_record(output_bytes=-1)
        with pytest.raises(ValueError):
            make_record(output_tokens=0)
        # zero output bytes is fine
        assert make_record(output_bytes=0).output_bytes == 0


class TestDeriveFeatures:
    def test_direct_substitution(self):
        f = derive_features(make_record())
        assert f.token_density == 3.0
        assert f.io_ratio == 2.0

    def test_zero_output(self):
        f = derive_features(make_record(output_bytes=0, output_tokens=5, input_bytes=10))
        assert f.token_density == 0.0
        assert f.io_ratio == 0.0

    def test_exact_rationals(self):
        f = derive_features(make_record(output_bytes=997, output_tokens=13, input_bytes=311))
        assert f.token_density == 997 / 13
        assert f.io_ratio == 997 / 311

    def test_missing_tokens(self):
        rec = make_record(output_tokens=None, t_done=5.0)
        with pytest.raises(ValueError, match="timing-recovery"):
            derive_features(rec)

    def test_deterministic(self):
        rec = make_record(output_bytes=997, output_tokens=13, input_bytes=311)
        assert derive_features(rec) == derive_features(rec)


class TestLoadTrace:
    def test_single_record(self, tmp_path):
        p = tmp_path / "t.trace"
        write_lines(p, [header(), record_line()])
        trace = load_trace(str(p))
        assert len(trace) == 1
        assert trace[0].id == "r0"
        assert trace.mode == "streaming"

    def test_t_first_before_send_reports_invariant(self, tmp_path):
        p = tmp_path / "t.trace"
        write_lines(p, [header(), record_line(t_send=1.0, t_first=0.5, t_done=2.0)])
        with pytest.raises(TraceFormatError, match="t_send <= t_first"):
            load_trace(str(p))

    def test_unusable_record_rejected(self, tmp_path):
        p = tmp_path / "t.trace"
        write_lines(p, [header(), record_line(output_tokens=None, t_done=None)])
        with pytest.raises(TraceFormatError, match="unusable"):
            load_trace(str(p))

    def test_reports_line_numbers(self, tmp_path):
        p = tmp_path / "t.trace"
        write_lines(p, [header(), record_line(), "not json", record_line(input_bytes=0)])
        with pytest.raises(TraceFormatError) as exc:
            load_trace(str(p))
        lines = [n for n, _ in exc.value.line_errors]
        assert lines == [3, 4]

    def test_unknown_key_is_error(self, tmp_path):
        p = tmp_path / "t.trace"
        obj = json.loads(record_line())
        obj["extra"] = 1
        write_lines(p, [header(), json.dumps(obj)])
        with pytest.raises(TraceFormatError, match="unknown keys"):
            load_trace(str(p))

    def test_missing_key_is_error(self, tmp_path):
        p = tmp_path / "t.trace"
        obj = json.loads(record_line())
        del obj["t_done"]
        write_lines(p, [header(), json.dumps(obj)])
        with pytest.raises(TraceFormatError, match="missing keys"):
            load_trace(str(p))

    def test_t_first_rejected_in_non_streaming(self, tmp_path):
        p = tmp_path / "t.trace"
        write_lines(
            p,
            [header("non-streaming"), record_line(t_send=0.0, t_first=1.0, t_done=2.0)],
        )
        with pytest.raises(TraceFormatError, match="non-streaming"):
            load_trace(str(p))

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_trace("/nonexistent/path.trace")

    def test_bad_header(self, tmp_path):
        p = tmp_path / "t.trace"
        write_lines(p, [json.dumps({"format": "other/1", "mode": "streaming"})])
        with pytest.raises(TraceFormatError, match="unsupported format"):
            load_trace(str(p))


class TestRoundTrip:
    def test_save_load_dump_byte_stable(self, tmp_path):
        records = [
            make_record(id="a", t_send=0.125, t_first=0.5, t_done=2.662607),
            make_record(id="b", label=None, output_tokens=None, t_send=1.0, t_done=3.5),
        ]
        trace = Trace(mode="streaming", records=tuple(records))
        p = tmp_path / "t.trace"
        save_trace(trace, str(p))
        first = p.read_bytes()
        reloaded = load_trace(str(p))
        assert dump_trace(reloaded).encode() == first

    def test_times_written_at_microsecond_resolution(self, tmp_path):
        trace = Trace(
            mode="streaming",
            records=(make_record(t_send=0.1234567891, t_done=2.00000049),),
        )
        p = tmp_path / "t.trace"
        save_trace(trace, str(p))
        rec = load_trace(str(p))[0]
        assert rec.t_send == 0.123457
        assert rec.t_done == 2.0

    def test_non_streaming_drops_t_first_on_write(self, tmp_path):
        trace = Trace(
            mode="non-streaming",
            records=(make_record(t_send=0.0, t_first=1.0, t_done=2.0),),
        )
        p = tmp_path / "t.trace"
        save_trace(trace, str(p))
        assert load_trace(str(p))[0].t_first is None

    def test_random_traces_round_trip(self, tmp_path):
        import numpy as np

        rng = np.random.default_rng(7)
        records = []
        for i in range(200):
            t0 = float(rng.uniform(0, 100))
            records.append(
                ObservationRecord(
                    id=f"r{i}",
                    label=rng.choice(["x", "y", None]),
                    input_bytes=int(rng.integers(1, 500)),
                    output_bytes=int(rng.integers(0, 900)),
                    output_tokens=int(rng.integers(1, 300)),
                    t_send=t0,
                    t_first=t0 + float(rng.uniform(0, 1)),
                    t_done=t0 + float(rng.uniform(1, 10)),
                )
            )
        trace = Trace(mode="streaming", records=tuple(records))
        p = tmp_path / "t.trace"
        save_trace(trace, str(p))
        assert dump_trace(load_trace(str(p))).encode() == p.read_bytes()
