import csv
import io
import math

import pytest
import yaml

from fbmhedge import cli
from fbmhedge.cli import (
    OUTPUT_ENV,
    ConfigError,
    build_config,
    load_config_file,
    main,
    parse_int_list,
    run,
)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestParseIntList:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("64,128,...,2048", [64, 128, 256, 512, 1024, 2048]),
            ("2,4,...,4", [2, 4]),
            ("10,15,...,30", [10, 15, 20, 25, 30]),
            ("3,5,7", [3, 5, 7]),
            ("8", [8]),
            (" 1 , 2 ", [1, 2]),
        ],
    )
    def test_examples(self, text, expected):
        assert parse_int_list(text) == expected

    @pytest.mark.parametrize("text", ["64,128,...,1000", "64,...,128", "4,2,...,1", "1,2,...,8,16"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_int_list(text)


class TestConfig:
    def test_command_defaults(self):
        assert build_config("localtime", {}, {}).paths == 10_000
        assert build_config("surface", {}, {}).k0 == pytest.approx(math.sqrt(math.pi / 2))
        assert build_config("theorem", {}, {}).n_list == [64, 128, 256, 512, 1024, 2048]

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump({"h": 0.7, "paths": 20, "n_list": "16,32,...,64", "seed": 3}))
        cfg = build_config("theorem", load_config_file(str(path)), {"paths": 30, "seed": None})
        assert (cfg.h, cfg.paths, cfg.seed, cfg.n_list) == (0.7, 30, 3, [16, 32, 64])

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("h: 0.7\nhurst: 0.8\n")
        with pytest.raises(ConfigError, match="hurst"):
            load_config_file(str(path))

    def test_wrong_command_in_file(self):
        with pytest.raises(ConfigError):
            build_config("theorem", {"command": "surface"}, {})

    @pytest.mark.parametrize(
        "command, flags",
        [
            ("theorem", {"h": 0.5}),
            ("fbm-check", {"h": 1.0}),
            ("theorem", {"paths": 0}),
            ("theorem", {"method": "fft"}),
            ("theorem", {"k0": -1.0}),
            ("corollary", {"alpha": 1.5}),
            ("mc-vs-quad", {"K": 0.0}),
            ("theorem", {"n_list": "a,b"}),
        ],
    )
    def test_invalid_values(self, command, flags):
        with pytest.raises(ConfigError, match="invalid value"):
            build_config(command, {}, flags)

    def test_unknown_key_exits_two(self, tmp_path, capsys):
        path = tmp_path / "cfg.yaml"
        path.write_text("bogus: 1\n")
        with pytest.raises(SystemExit) as exc:
            main(["surface", "--config", str(path)])
        assert exc.value.code == 2
        assert "bogus" in capsys.readouterr().err


class TestRun:
    def test_output_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
        assert run(build_config("continuity", {}, {"K": 1.0}), io.StringIO()) == 0
        assert (tmp_path / "env" / "continuity.csv").exists()

    def test_surface_exit_status(self, tmp_path):
        stream = io.StringIO()
        code = run(build_config("surface", {}, {"output": str(tmp_path)}), stream)
        rows = read_csv(tmp_path / "surface.csv")
        # the decay check at K = 5 is the only failing one
        assert code == 1 and len(rows) == 57 * 9
        text = stream.getvalue()
        assert text.count("[FAIL]") == 1 and "[FAIL] EJ(K=5)" in text

    def test_failing_check_exit_one(self, tmp_path):
        cfg = build_config("localtime", {}, {"output": str(tmp_path), "paths": 8, "n_list": "16,32", "h": 0.7})
        stream = io.StringIO()
        assert run(cfg, stream) == 1
        assert "SOME CHECKS FAILED" in stream.getvalue()

    def test_hedge_outputs(self, tmp_path):
        cfg = build_config("hedge", {}, {"output": str(tmp_path), "n_list": "16,32,...,256", "sim_steps": 256})
        assert run(cfg, io.StringIO()) == 0
        path = read_csv(tmp_path / "path.csv")
        hedge = read_csv(tmp_path / "hedge.csv")
        assert len(path) == 257 and float(path[0]["price"]) == 1.0
        assert [int(r["n"]) for r in hedge] == [16, 32, 64, 128, 256]
        for r in hedge:
            assert float(r["i1"]) <= 0.0
            assert float(r["terminal_value"]) - float(r["payoff_terminal"]) == pytest.approx(
                float(r["i1"]) - float(r["i2"]), abs=1e-12)

    def test_hedge_payoff_file(self, tmp_path):
        payoff = tmp_path / "payoff.yaml"
        payoff.write_text(yaml.safe_dump({"atoms": [[0.9, 1.0], [1.1, 1.0]], "base_slope": -1.0}))
        cfg = build_config("hedge", {}, {"output": str(tmp_path), "payoff": str(payoff),
                                         "n_list": "8,16", "sim_steps": 16})
        assert run(cfg, io.StringIO()) == 0

    def test_theorem_rejects_other_alpha(self, tmp_path):
        cfg = build_config("theorem", {}, {"output": str(tmp_path), "alpha": "0.5"})
        with pytest.raises(ConfigError):
            run(cfg, io.StringIO())

    def test_main_runs(self, tmp_path, capsys):
        code = main(["continuity", "--K", "2.0", "--output", str(tmp_path)])
        assert code == 0
        assert "continuity" in capsys.readouterr().out


class TestWorkerDeterminism:
    @pytest.mark.parametrize(
        "command, flags",
        [
            ("theorem", {"paths": 150, "n_list": "16,32,64", "sim_steps": 256}),
            ("corollary", {"paths": 130, "n_list": "16,32,64", "sim_steps": 256}),
            ("fbm-check", {"paths": 200, "steps": 8}),
            ("localtime", {"paths": 140, "n_list": "64,128,256"}),
            ("mc-vs-quad", {"paths": 140, "sim_steps": 256}),
        ],
    )
    def test_byte_identical(self, tmp_path, command, flags):
        outputs = []
        for workers in (1, 2):
            out = tmp_path / f"w{workers}"
            cfg = build_config(command, {}, dict(flags, workers=workers, output=str(out)))
            run(cfg, io.StringIO())
            outputs.append({p.name: p.read_bytes() for p in out.iterdir()})
        assert outputs[0] == outputs[1] and outputs[0]


def test_module_commands_cover_handlers():
    assert set(cli.COMMANDS) == set(cli.HANDLERS)
