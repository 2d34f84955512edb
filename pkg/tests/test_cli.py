import json
import math
import re

import pytest

from lrmm.cli import main, risk_colour

TINY = {
    "version": 1,
    "dataset": {"worlds": 2, "samples": 64, "test_worlds": 1, "test_samples": 16, "n": 4, "m": 1, "t": 1.0,
                "seed": 3},
    "train": {"epochs": 3, "batch_size": 16},
    "eval": {"episodes": 3, "duration": 4.0, "guardians": ["lrmm", "inactive", "brakes_only"]},
}


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(TINY))
    return path


def pipeline(root, cfg, workers):
    root.mkdir()
    assert run("--config", cfg, "gen-world", "--out", root / "w.json", "--seed", 4) == 0
    assert run("--config", cfg, "gen-dataset", "--out", root / "d.lrmd", "--workers", workers, "--quiet") == 0
    assert run("--config", cfg, "train", "--data", root / "d.lrmd", "--out", root / "m.lrmm", "--quiet") == 0
    assert run("--config", cfg, "eval", "--model", root / "m.lrmm", "--out", root / "r.json",
               "--workers", workers) == 0
    return [(root / name).read_bytes() for name in ("w.json", "d.lrmd", "m.lrmm", "m.lrmm.log.json", "r.json")]


def test_pipeline_replay_is_byte_identical(tmp_path, cfg_path, capsys):
    a = pipeline(tmp_path / "a", cfg_path, 1)
    b = pipeline(tmp_path / "b", cfg_path, 2)
    assert a == b
    report = json.loads(a[-1])
    assert report["guardians"]["inactive"]["intervention"]["mean"] == 0.0
    assert report["guardians"]["brakes_only"]["intervention"]["mean"] == 1.0
    assert "brakes_only" in capsys.readouterr().out


def test_infer_oracle_inside_obstacle_is_one(tmp_path, cfg_path, capsys):
    world = tmp_path / "w.json"
    assert run("--config", cfg_path, "gen-world", "--out", world, "--seed", 9) == 0
    cx, cy, _ = json.loads(world.read_text())["discs"][0]
    capsys.readouterr()
    assert run("--config", cfg_path, "infer", "--world", world, "--oracle", "--state", cx, cy, 0.0, 1.0) == 0
    assert float(capsys.readouterr().out) == 1.0


def test_render_arrow_bases_sit_on_states(tmp_path, cfg_path):
    data = tmp_path / "d.lrmd"
    assert run("--config", cfg_path, "gen-dataset", "--out", data, "--quiet") == 0
    svg = tmp_path / "map.svg"
    assert run("--config", cfg_path, "render", "--data", data, "--world-id", 0, "--out", svg) == 0
    text = svg.read_text()
    arrows = re.findall(r'data-x="([-\d.]+)" data-y="([-\d.]+)" data-theta="([-\d.]+)">'
                        r'<line x1="([-\d.]+)" y1="([-\d.]+)" x2="([-\d.]+)" y2="([-\d.]+)"', text)
    assert len(arrows) == 32  # half of the 64 training records land in world 0
    scale = 800 / 16.0
    for x, y, th, x1, y1, x2, y2 in (map(float, a) for a in arrows):
        assert abs(x1 - (x + 8) * scale) < 0.01 and abs(y1 - (8 - y) * scale) < 0.01
        ang = math.atan2(-(y2 - y1), x2 - x1)
        assert abs(math.remainder(ang - th, 2 * math.pi)) < 0.01


def test_risk_colour_scale():
    assert risk_colour(0.0) == "#00c800"
    assert risk_colour(1.0) == "#ff0000"


def test_exit_codes(tmp_path, cfg_path):
    assert run("--config", tmp_path / "nope.json", "gen-world", "--out", tmp_path / "w.json") == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 7}))
    assert run("--config", bad, "gen-world", "--out", tmp_path / "w.json") == 2
    assert run("--config", cfg_path, "train", "--data", tmp_path / "missing.lrmd", "--out", tmp_path / "m") == 3
    junk = tmp_path / "junk.lrmd"
    junk.write_bytes(b"not a dataset")
    assert run("--config", cfg_path, "train", "--data", junk, "--out", tmp_path / "m") == 3
    assert run("--config", cfg_path, "--set", "dataset.n=0", "gen-dataset", "--out", tmp_path / "d") == 2
    with pytest.raises(SystemExit) as exc:
        run("gen-world", "--bogus")
    assert exc.value.code == 2
