import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semac.evalcli import (CSV_COLUMNS, ConfigError, NMSEAccumulator, cli, expand_sweep,
                           load_config, nmse, parse_config, resolve_threads, rows_to_csv,
                           run_experiment)

SMALL = {"function": {"kind": "sum", "values": [0, 1], "K": 2},
         "L": 1, "snr_db": [0, 10, 20], "trials": 600, "seed": 4}
PA = {"function": {"kind": "product", "values": [1, 2, 3, 4], "K": 2},
      "L": 2, "snr_db": [10, 30], "trials": 200, "scheme": "semac-pa",
      "fixed_modulation": "4-QAM", "channel": "rayleigh", "power_adaptation": {"block": 50}}


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestNMSE:
    def test_exact(self):
        assert nmse([3, 4], [3, 4], 8, 0) == 0

    def test_full_range(self):
        assert nmse([8], [32], 32, 8) == 1

    def test_example(self):
        assert nmse([10, 10], [10, 12], 32, 8) == pytest.approx(4 / 1152)
        assert round(nmse([10, 10], [10, 12], 32, 8), 6) == 0.003472

    def test_errors(self):
        with pytest.raises(ValueError):
            nmse([1], [1], 3, 3)
        with pytest.raises(ValueError):
            nmse([], [], 1, 0)
        with pytest.raises(ValueError):
            nmse([1, 2], [1], 3, 0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=20), st.floats(-1e3, 1e3),
           st.integers(0, 10**6))
    def test_affine_shift(self, t, c, seed):
        t = np.asarray(t)
        e = t + np.random.default_rng(seed).standard_normal(t.size)
        a = nmse(t, e, 60, -60)
        b = nmse(t + c, e + c, 60 + c, -60 + c)
        assert b == pytest.approx(a, rel=1e-9, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 30), st.integers(1, 30))
    def test_batches_merge_to_weighted_mean(self, seed, n1, n2):
        rng = np.random.default_rng(seed)
        t, e = rng.normal(size=n1 + n2), rng.normal(size=n1 + n2)
        a, b = NMSEAccumulator(4.0), NMSEAccumulator(4.0)
        a.add(t[:n1], e[:n1])
        b.add(t[n1:], e[n1:])
        merged = a.merge(b)
        whole = nmse(t, e, 2, 0)
        assert merged.value == pytest.approx(whole, rel=1e-12)
        assert merged.value == pytest.approx((n1 * a.value + n2 * b.value) / (n1 + n2))
        assert merged.count == n1 + n2


class TestConfig:
    def test_defaults(self):
        cfg = parse_config(SMALL)
        assert (cfg.scheme, cfg.channel, cfg.block, cfg.n_samples) == ("semac", "unit", 100, 100)
        assert cfg.function.mode == "full" and cfg.projection == "closed-form"

    @pytest.mark.parametrize("patch,field", [
        ({"trials": 0}, "trials"),
        ({"snr_db": []}, "snr_db"),
        ({"L": "2"}, "L"),
        ({"channel": "awgn"}, "channel"),
        ({"scheme": "semac-pa"}, "fixed_modulation"),
        ({"color": 1}, "color"),
        ({"design": {"projection": "svd"}}, "design.projection"),
        ({"power_adaptation": {"block": 0}}, "power_adaptation.block"),
        ({"function": {"kind": "sum", "values": [0, 1, 2], "K": 2}}, "function.values"),
        ({"function": {"kind": "custom", "values": [0, 1], "K": 2,
                       "mode": "symmetric-shared"}}, "function.mode"),
    ])
    def test_field_errors(self, patch, field):
        doc = dict(SMALL, **patch)
        with pytest.raises(ConfigError) as info:
            parse_config(doc, "cfg.json")
        assert info.value.field == field and info.value.path == "cfg.json"

    def test_pattern_must_match_alphabet(self):
        with pytest.raises(ConfigError) as info:
            parse_config(dict(PA, fixed_modulation="16-QAM"))
        assert info.value.field == "fixed_modulation"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config(str(tmp_path / "nope.json"))
        assert "nope.json" in info.value.path

    def test_threads(self, monkeypatch):
        monkeypatch.setenv("SEMAC_THREADS", "3")
        assert resolve_threads() == 3
        monkeypatch.setenv("SEMAC_THREADS", "zero")
        with pytest.raises(ConfigError):
            resolve_threads()
        monkeypatch.delenv("SEMAC_THREADS")
        assert resolve_threads(2) == 2

    def test_sweep_expansion(self):
        docs = expand_sweep({"base": SMALL, "grid": {"L": [1, 2], "function.kind": ["sum", "max"]},
                             "runs": [{"seed": 1}, {"seed": 2}]})
        assert len(docs) == 8
        assert {(d["L"], d["function"]["kind"], d["seed"]) for d in docs} == {
            (L, k, s) for L in (1, 2) for k in ("sum", "max") for s in (1, 2)}
        assert SMALL["L"] == 1 and "seed" in SMALL       # base untouched


class TestExperiment:
    def test_noiseless_is_exact(self):
        report = run_experiment(parse_config(dict(SMALL, noiseless=True)), threads=1)
        assert np.all(report.nmse() == 0)
        assert [r["trials"] for r in report.rows] == [600] * 3
        assert report.metadata["design"]["violated_pairs"] == 0

    def test_monotone_in_snr(self):
        report = run_experiment(parse_config(dict(SMALL, trials=3000)), threads=2)
        v, se = report.nmse(), report.stderr()
        assert np.all(v >= 0)
        for a in range(len(v) - 1):
            assert v[a] >= v[a + 1] - 3 * np.hypot(se[a], se[a + 1])

    def test_csv_schema(self):
        report = run_experiment(parse_config(SMALL), threads=1)
        lines = rows_to_csv(report.rows).splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert lines[1].startswith("0.0,") and lines[1].endswith(",semac,1,2,2,sum")

    def test_threads_do_not_change_results(self):
        cfg = parse_config(dict(SMALL, trials=1500))
        a = rows_to_csv(run_experiment(cfg, threads=1).rows)
        b = rows_to_csv(run_experiment(cfg, threads=4).rows)
        assert a == b

    def test_power_adaptation(self):
        report = run_experiment(parse_config(PA), threads=2)
        meta = report.metadata
        assert meta["min_worst_margin"] >= -1e-6 and meta["merged_entries"] == 0
        assert all(r["scheme"] == "semac-pa" and r["trials"] == 200 for r in report.rows)
        noiseless = run_experiment(parse_config(dict(PA, noiseless=True)), threads=1)
        assert np.all(noiseless.nmse() == 0)


class TestCLI:
    def test_design(self, tmp_path):
        cfg = write(tmp_path, "cfg.json", SMALL)
        out = tmp_path / "d.json"
        assert cli(["design", "--config", cfg, "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["L"] == 1 and doc["margin_report"]["status"] == "feasible"

    def test_missing_config(self, tmp_path, capsys):
        assert cli(["simulate", "--config", str(tmp_path / "absent.json")]) != 0
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError" and err["path"].endswith("absent.json")

    def test_pa_without_pattern(self, tmp_path, capsys):
        doc = {k: v for k, v in PA.items() if k != "fixed_modulation"}
        assert cli(["simulate", "--config", write(tmp_path, "c.json", doc)]) == 2
        assert json.loads(capsys.readouterr().err)["field"] == "fixed_modulation"

    def test_usage_error(self, capsys):
        assert cli(["simulate", "--frobnicate"]) == 2
        assert json.loads(capsys.readouterr().err)["error"] == "UsageError"

    def test_simulate_is_byte_stable(self, tmp_path, monkeypatch):
        cfg = write(tmp_path, "cfg.json", SMALL)
        outs = []
        for n, threads in enumerate(["1", "3"]):
            monkeypatch.setenv("SEMAC_THREADS", threads)
            path = tmp_path / f"run{n}.csv"
            assert cli(["simulate", "--config", cfg, "--seed", "9", "--out", str(path)]) == 0
            outs.append(path.read_bytes())
            report = json.loads((tmp_path / f"run{n}.report.json").read_text())
            assert report["metadata"]["config"]["seed"] == 9
        assert outs[0] == outs[1]

    def test_adapt(self, tmp_path):
        out = tmp_path / "plan.json"
        assert cli(["adapt", "--config", write(tmp_path, "pa.json", PA), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["K"] == 2 and doc["L"] == 2 and doc["total_power"] >= doc["sdp_optimum"] - 1e-6

    def test_sweep(self, tmp_path):
        sweep = {"base": dict(SMALL, trials=100), "grid": {"L": [1, 2]}}
        out = tmp_path / "sweep.csv"
        assert cli(["sweep", "--config", write(tmp_path, "s.json", sweep),
                    "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1 + 2 * 3
        assert len(json.loads((tmp_path / "sweep.report.json").read_text())["runs"]) == 2
