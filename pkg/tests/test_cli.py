import json
import math
import re
import subprocess
import sys

import pytest

from schatten_bench import __version__
from schatten_bench.cli import PRESETS, ConfigError, main, resolve
from schatten_bench.streams import schatten_lower_stream, write_stream


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, cfg, *extra):
    return main(["run", write_config(tmp_path, cfg), "--quiet", *extra])


@pytest.mark.parametrize("preset", sorted(PRESETS))
def test_every_preset_runs(tmp_path, preset):
    out = tmp_path / "out"
    cfg = {"experiment": preset, "trials": 3, "output_dir": str(out), "emit": ["csv", "json", "svg"]}
    assert run(tmp_path, cfg) == 0
    doc = json.loads((out / f"{preset}.json").read_text())
    assert doc["config"] == cfg and doc["version"] == __version__
    assert (out / f"{preset}.csv").read_text().strip()
    if (out / f"{preset}.svg").exists():
        svg = (out / f"{preset}.svg").read_text()
        assert svg.startswith("<svg") and __version__ in svg


def test_thm2_p2_report_and_plot(tmp_path):
    out = tmp_path / "out"
    assert run(tmp_path, {"experiment": "thm2-p2", "trials": 4, "output_dir": str(out)}) == 0
    doc = json.loads((out / "thm2-p2.json").read_text())
    fit = doc["results"]["rate_fit"]
    assert {"horizons", "means", "stderrs", "slope", "r2"} <= set(fit)
    assert (out / "thm2-p2.csv").read_text().splitlines()[0] == "t,loss,cumulative"
    svg_path = tmp_path / "fit.svg"
    assert main(["plot", str(out / "thm2-p2.json"), str(svg_path)]) == 0
    svg = svg_path.read_text()
    assert 'class="reference"' in svg and 'data-slope="0.5"' in svg
    assert 'class="lower"' in svg and 'class="envelope"' in svg


def test_thm4_separation_has_envelope(tmp_path):
    out = tmp_path / "out"
    cfg = {"experiment": "thm4-separation", "trials": 2, "output_dir": str(out), "emit": ["json", "svg"]}
    assert run(tmp_path, cfg) == 0
    svg = (out / "thm4-separation.svg").read_text()
    assert "2 + 8 sqrt(T ln 2T)" in svg


def test_explicit_regret_experiment(tmp_path):
    out = tmp_path / "out"
    cfg = {
        "experiment": {
            "stream": {"kind": "schatten_lower", "T": 16, "p": 2},
            "learner": {"kind": "zero"},
            "analysis": {"kind": "regret"},
        },
        "trials": 2,
        "output_dir": str(out),
    }
    assert run(tmp_path, cfg) == 0
    rows = (out / "experiment.csv").read_text().splitlines()
    assert rows[0] == "t,loss,cumulative" and len(rows) == 17


def test_determinism(tmp_path):
    out = tmp_path / "out"
    cfg = {"experiment": "lemma1-tree", "seed": 11, "trials": 3, "output_dir": str(out)}
    assert run(tmp_path, cfg) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    for p in out.iterdir():
        p.unlink()
    assert run(tmp_path, cfg) == 0
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


def test_malformed_config_exit_2_without_outputs(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"experiment": "thm2-p2",, }')
    out = tmp_path / "out"
    assert main(["run", str(path)]) == 2
    assert "line 1" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize(
    "cfg, field",
    [
        ({"experiment": "thm2-p2", "colour": "red"}, "colour"),
        ({"experiment": "thm2-p3"}, "thm2-p3"),
        ({"experiment": "thm2-p2", "trials": 1}, "trials"),
        ({"experiment": "thm2-p2", "emit": ["png"]}, "emit"),
        ({"experiment": {"stream": {"kind": "schatten_lower", "T": 4, "q": 2}, "learner": {"kind": "ogd"},
                         "analysis": {"kind": "regret"}}}, "q"),
        ({"experiment": {"stream": {"kind": "schatten_lower", "T": 4, "p": 0.5}, "learner": {"kind": "ogd"},
                         "analysis": {"kind": "regret"}}}, "experiment.stream.p"),
        ({"experiment": {"analysis": {"kind": "rate_fit", "horizons": [1, 2]}, "stream": {"kind": "schatten_lower"},
                         "learner": {"kind": "ogd"}}}, "horizons"),
    ],
)
def test_config_errors_name_the_field(tmp_path, capsys, cfg, field):
    cfg = {**cfg, "output_dir": str(tmp_path / "out")}
    assert run(tmp_path, cfg) == 2
    assert field in capsys.readouterr().err
    assert not (tmp_path / "out").exists()
    with pytest.raises(ConfigError):
        resolve(cfg)


def test_feasibility_error_exit_3(tmp_path, capsys):
    cfg = {
        "experiment": {
            "stream": {"kind": "schatten_lower", "T": 16, "d": 4, "p": 2},
            "learner": {"kind": "ogd"},
            "analysis": {"kind": "regret"},
        },
        "trials": 2,
        "output_dir": str(tmp_path / "out"),
    }
    assert run(tmp_path, cfg) == 3
    assert "d >= 16" in capsys.readouterr().err


def test_io_error_exit_4(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json")]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = {"experiment": "kernel-hs", "trials": 2, "output_dir": str(blocker / "sub")}
    assert run(tmp_path, cfg) == 4
    assert "I/O error" in capsys.readouterr().err


def test_stream_file_run(tmp_path):
    stream_path = tmp_path / "s.jsonl"
    write_stream(schatten_lower_stream(8, 2, 1.0, seed=0), stream_path)
    out = tmp_path / "out"
    cfg = {
        "experiment": {
            "stream": {"kind": "schatten_lower", "T": 8, "p": 2},
            "learner": {"kind": "ogd"},
            "analysis": {"kind": "regret", "comparator": "solver"},
        },
        "trials": 2,
        "output_dir": str(out),
    }
    assert run(tmp_path, cfg, "--stream", str(stream_path)) == 0
    doc = json.loads((out / "experiment.json").read_text())
    assert doc["stream_file"] == str(stream_path)
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"d": 1}\n{"x": [2.0], "y": [0.0]}\n')
    assert run(tmp_path, cfg, "--stream", str(bad)) == 3


def test_plot_errors(tmp_path, capsys):
    rep = tmp_path / "rep.json"
    rep.write_text(json.dumps({"kind": "regret_report", "per_round": [], "comparator_loss": 0.0}))
    svg = tmp_path / "x.svg"
    assert main(["plot", str(rep), str(svg)]) == 2
    assert not svg.exists()
    rep.write_text("not json")
    assert main(["plot", str(rep), str(svg)]) == 2
    rep.write_text(json.dumps({"kind": "something"}))
    assert main(["plot", str(rep), str(svg)]) == 2
    assert not svg.exists()


def test_plot_rate_fit_slope_half(tmp_path):
    T = [16, 64, 256]
    fit = {"kind": "rate_fit", "horizons": T, "means": [math.sqrt(t) for t in T], "stderrs": [0, 0, 0],
           "slope": 0.5, "r2": 1.0}
    rep = tmp_path / "fit.json"
    rep.write_text(json.dumps(fit))
    svg = tmp_path / "fit.svg"
    assert main(["plot", str(rep), str(svg)]) == 0
    text = svg.read_text()
    assert re.search(r'<line class="reference"[^>]*data-slope="0.5"', text)


def test_verify_unit_via_module(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "schatten_bench", "verify", "unit"], capture_output=True,
                          text=True, cwd=tmp_path)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "7/7 criteria passed" in proc.stdout
    assert proc.stdout.count("[PASS]") == 7


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out
