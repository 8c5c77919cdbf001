import json
import locale

import numpy as np
import pytest

from srwe.cli import (
    ConfigError,
    config_to_dict,
    emit_csv,
    format_value,
    parse_config,
    parse_config_text,
    read_csv,
    run_command,
)


class TestConfig:
    def test_shipped_default(self):
        cfg = parse_config("paper_default.json")
        assert cfg.scenario == "ev_charging"
        ev = cfg.ev
        assert (ev.n_hours, ev.n_players, ev.cap_kw, ev.budget_kwh, ev.capacity_kw) == (24, 100, 2.0, 9.0, 1.0)
        assert (ev.window_start, ev.window_end) == (5, 22)
        assert cfg.solver.rho == 1.0 and cfg.solver.max_iter == 500
        assert cfg.perturbation.magnitudes == [1.0, 2.0, 4.0] and cfg.perturbation.trials == 200

    def test_shipped_poa(self):
        cfg = parse_config("paper_poa.json")
        assert cfg.scenario == "poa" and len(cfg.poa.epsilons) == 21

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("")
        with pytest.raises(ConfigError, match="required keys: scenario"):
            parse_config(path)

    def test_unknown_key(self):
        text = '{\n  "scenario": "ev_charging",\n  "solver": {\n    "rho_": 1.0\n  }\n}\n'
        with pytest.raises(ConfigError, match=r"'rho_' \(line 4\)"):
            parse_config_text(text)

    def test_syntax_error_location(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text('{"scenario": "ev_charging",\n "seed": }')

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            parse_config_text('{"scenario": "traffic"}')
        with pytest.raises(ConfigError):
            parse_config_text('{"scenario": "ev_charging", "seed": -1}')
        with pytest.raises(ConfigError):
            parse_config_text('{"scenario": "ev_charging", "solver": {"rho": 0}}')
        with pytest.raises(ConfigError):
            parse_config_text('{"scenario": "ev_charging", "ev": {"budget_kwh": 99}}')

    def test_round_trip(self):
        for name in ("paper_default.json", "paper_poa.json"):
            cfg = parse_config(name)
            again = parse_config_text(json.dumps(config_to_dict(cfg)))
            assert config_to_dict(again) == config_to_dict(cfg)
            assert again.perturbation.seed == cfg.seed


class TestCsv:
    def test_three_rows(self, tmp_path):
        path = emit_csv([[0.0, 1.25], [0.1, 1.0], [0.2, 1.000000000001]], ["epsilon", "price_of_anarchy"],
                        tmp_path / "poa.csv")
        raw = path.read_bytes()
        assert raw.count(b"\n") == 4 and b"\r" not in raw
        assert raw.decode().splitlines() == ["epsilon,price_of_anarchy", "0,1.25", "0.1,1", "0.2,1"]

    def test_schema_mismatch(self, tmp_path):
        with pytest.raises(ValueError):
            emit_csv([[1, 2, 3]], ["a", "b"], tmp_path / "x.csv")
        with pytest.raises(ValueError):
            emit_csv([{"a": 1}], ["a", "b"], tmp_path / "x.csv")

    def test_formatting(self):
        assert format_value(-0.0) == "0"
        assert format_value(np.float64(1 / 3)) == "0.333333333333"
        assert format_value(True) == "true"
        assert format_value(np.int64(7)) == "7"
        assert format_value(float("inf")) == "inf"

    def test_locale_independent(self, tmp_path):
        before = emit_csv([[1234.5]], ["v"], tmp_path / "a.csv").read_bytes()
        for name in ("de_DE.UTF-8", "fr_FR.UTF-8"):
            try:
                old = locale.setlocale(locale.LC_ALL, name)
            except locale.Error:
                continue
            try:
                assert emit_csv([[1234.5]], ["v"], tmp_path / "b.csv").read_bytes() == before
            finally:
                locale.setlocale(locale.LC_ALL, "C")
        assert before == b"v\n1234.5\n"


class TestCommands:
    def test_srwe(self, tmp_path):
        assert run_command(["srwe", "--config", "paper_default.json", "--epsilon", "2", "--out", str(tmp_path)]) == 0
        header, rows = read_csv(tmp_path / "srwe_profile_eps2.0.csv")
        assert header == ["hour", "x_0", "sigma"] and len(rows) == 24
        _, rep = read_csv(tmp_path / "srwe_report.csv")
        assert rep[0][-2:] == ["true", "true"]

    def test_verify(self, tmp_path, capsys):
        out = str(tmp_path)
        assert run_command(["srwe", "--config", "paper_default.json", "--epsilon", "2", "--out", out]) == 0
        prof = tmp_path / "srwe_profile_eps2.0.csv"
        args = ["verify", "--config", "paper_default.json", "--epsilon", "2", "--out", out, "--profile"]
        assert run_command(args + [str(prof)]) == 0
        # Move charge from the cheapest used hour to the most expensive available one.
        header, rows = read_csv(prof)
        x = np.array([float(r[1]) for r in rows])
        lo, hi = int(np.argmax(x)), 5
        shift = min(0.9, x[lo], 2.0 - x[hi])
        x[lo] -= shift
        x[hi] += shift
        emit_csv([[k, x[k], 0.0] for k in range(24)], header, tmp_path / "tampered.csv")
        capsys.readouterr()
        assert run_command(args + [str(tmp_path / "tampered.csv")]) == 2
        assert "gap=" in capsys.readouterr().err

    def test_verify_needs_profile(self, tmp_path):
        assert run_command(["verify", "--config", "paper_default.json", "--out", str(tmp_path)]) == 1

    def test_oracle_check(self, tmp_path):
        assert run_command(["oracle-check", "--seed", "7", "--out", str(tmp_path)]) == 0
        _, rows = read_csv(tmp_path / "oracle_check.csv")
        assert len(rows) == 100 and all(r[-1] == "true" for r in rows)

    def test_valley_and_plot(self, tmp_path):
        out = str(tmp_path)
        assert run_command(["valley", "--config", "paper_default.json", "--out", out]) == 0
        header, rows = read_csv(tmp_path / "valley_filling.csv")
        assert header == ["hour", "0.0", "2.0", "4.0", "non_pev"] and len(rows) == 24
        assert run_command(["plot", "--out", out]) == 0
        assert (tmp_path / "valley_filling.svg").exists()

    def test_bad_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"scenario": "ev_charging", "typo": 1}')
        assert run_command(["srwe", "--config", str(bad), "--out", str(tmp_path)]) == 1
        assert run_command(["srwe", "--config", str(tmp_path / "missing.json")]) == 1
        assert run_command(["srwe", "--config", "paper_default.json", "--epsilon", "-1"]) == 1
        assert run_command(["bogus"]) == 1
        assert run_command(["plot", "--out", str(tmp_path / "nothing")]) == 1

    def test_non_convergence_exit(self, tmp_path):
        cfg = tmp_path / "short.json"
        cfg.write_text('{"scenario": "ev_charging", "solver": {"max_iter": 1, "rho": 0.01}}')
        assert run_command(["srwe", "--config", str(cfg), "--epsilon", "2", "--out", str(tmp_path)]) == 2

    def test_byte_identical_reruns(self, tmp_path):
        for sub in ("a", "b"):
            assert run_command(["perturb", "--config", "paper_default.json", "--epsilon", "0", "--epsilon", "2",
                                "--seed", "11", "--out", str(tmp_path / sub)]) == 0
        for name in ("robustness.csv", "histogram.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
