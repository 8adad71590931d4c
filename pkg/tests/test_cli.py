import json
import subprocess
import sys

import numpy as np
import pytest

from illumkit import io
from illumkit.cli import main
from illumkit.panorama import Locale, PanoramaImage


def run(capsys, *argv):
    code = main(["--json", *map(str, argv)])
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1]) if out else None


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    assert main(["make-room", str(d / "room"), "--cameras", "3"]) == 0
    return d


@pytest.fixture
def hdr_map(tmp_path):
    rng = np.random.default_rng(3)
    p = tmp_path / "a.pfm"
    io.write_panorama(p, PanoramaImage(rng.exponential(0.1, size=(40, 80, 3)), "hdr", Locale([1, 1, 0.1])))
    return p


def test_eval_identical_is_zero(capsys, hdr_map, tmp_path):
    code, res = run(capsys, "eval", hdr_map, hdr_map, "-o", tmp_path / "r.json")
    assert code == 0 and res["ok"]
    assert res["l2_log"] == res["l2"] == res["diffuse"] == 0.0
    assert json.loads((tmp_path / "r.json").read_text())["l2"] == 0.0
    # the report figure sits next to the JSON
    assert (tmp_path / "r.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_eval_no_figure(capsys, hdr_map, tmp_path):
    code, _ = run(capsys, "eval", hdr_map, hdr_map, "-o", tmp_path / "q.json", "--no-figure")
    assert code == 0 and not (tmp_path / "q.png").exists()


def test_eval_dimension_mismatch(capsys, hdr_map, tmp_path):
    other = tmp_path / "b.pfm"
    io.write_pfm(other, np.zeros((20, 40, 3)))
    code, res = run(capsys, "eval", hdr_map, other)
    assert code == 1 and not res["ok"] and "mismatch" in res["error"]


def test_malformed_file_reports_offset(capsys, tmp_path):
    bad = tmp_path / "bad.pfm"
    bad.write_bytes(b"PF\n4 zz\n-1.0\n")
    code, res = run(capsys, "ldr2hdr", bad, "-o", tmp_path / "o.pfm")
    assert code == 1 and "byte 5" in res["error"]


def test_ldr_hdr_round_trip(capsys, tmp_path):
    J = np.random.default_rng(4).uniform(size=(8, 16, 3))
    io.write_panorama(tmp_path / "j.pfm", PanoramaImage(J, "ldr"))
    assert run(capsys, "ldr2hdr", tmp_path / "j.pfm", "-o", tmp_path / "h.pfm")[0] == 0
    assert run(capsys, "hdr2ldr", tmp_path / "h.pfm", "-o", tmp_path / "j2.pfm")[0] == 0
    back = io.read_panorama(tmp_path / "j2.pfm")
    assert back.kind == "ldr"
    np.testing.assert_allclose(back.data, J, atol=1e-6)


def test_diffuse_and_relight(capsys, hdr_map, tmp_path):
    code, _ = run(capsys, "diffuse", hdr_map, "--work-dims", "20x40", "-o", tmp_path / "d.pfm")
    assert code == 0 and io.read_pfm(tmp_path / "d.pfm").shape == (20, 40, 3)
    code, _ = run(capsys, "relight", hdr_map, "--material", "diffuse", "--size", "32", "-o", tmp_path / "s.png")
    assert code == 0
    img = io.read_png(tmp_path / "s.png")
    assert img.shape == (32, 32, 3) or img.shape[:2] == (32, 32)


def test_gradcheck(capsys):
    code, res = run(capsys, "gradcheck", "--seed", "1")
    assert code == 0 and res["passed"]
    assert max(res["max_relative_error"].values()) < 1e-4


def test_pipeline_deterministic(capsys, scene, tmp_path):
    man = scene / "room" / "manifest.json"
    outs = []
    for k in range(2):
        o = tmp_path / f"p{k}.pfm"
        code, res = run(capsys, "warp", man, "--image", 0, "--pixel", "200,230", "--dims", "40x80", "-o", o)
        assert code == 0
        outs.append(o.read_bytes())
    assert outs[0] == outs[1]
    assert io.read_sidecar(tmp_path / "p0.pfm")["kind"] == "ldr"


def test_gen_locales_and_illum(capsys, scene, tmp_path):
    man = scene / "room" / "manifest.json"
    code, _ = run(capsys, "gen-locales", man, "-o", tmp_path / "loc.json")
    assert code == 0
    locs = io.read_locales(tmp_path / "loc.json")
    assert len(locs) > 10
    code, _ = run(capsys, "gen-illum", man, "--locales", tmp_path / "loc.json", "--locale", 0, "--dims", "40x80",
                  "--distance-out", tmp_path / "dist.pfm", "-o", tmp_path / "gt.pfm")
    assert code == 0
    gt = io.read_panorama(tmp_path / "gt.pfm")
    np.testing.assert_array_equal(gt.locale.position, locs[0].position)
    assert io.read_pfm(tmp_path / "dist.pfm").min() > 0
    code, res = run(capsys, "gen-illum", man, "--locales", tmp_path / "loc.json", "--locale", 10 ** 6,
                    "-o", tmp_path / "x.pfm")
    assert code == 1 and "out of range" in res["error"]


def test_complete_methods(capsys, scene, tmp_path):
    man = scene / "room" / "manifest.json"
    run(capsys, "warp", man, "--pixel", "200,230", "--dims", "40x80", "-o", tmp_path / "p.pfm")
    code, _ = run(capsys, "complete", tmp_path / "p.pfm", "--method", "mirror", "-o", tmp_path / "m.pfm")
    assert code == 0 and not np.any(io.read_pfm(tmp_path / "m.pfm") == -1)
    lib = tmp_path / "lib"
    lib.mkdir()
    io.write_pfm(lib / "e0.pfm", np.full((40, 80, 3), 0.2))
    io.write_pfm(lib / "e1.pfm", np.full((40, 80, 3), 0.9))
    code, res = run(capsys, "complete", tmp_path / "p.pfm", "--method", "nn", "--library", lib,
                    "-o", tmp_path / "n.pfm")
    assert code == 0
    assert not np.any(io.read_pfm(tmp_path / "n.pfm") == -1)
    code, res = run(capsys, "complete", tmp_path / "p.pfm", "--method", "nn", "-o", tmp_path / "n2.pfm")
    assert code == 1


def test_warp_invalid_pixel(capsys, scene, tmp_path):
    man = scene / "room" / "manifest.json"
    code, res = run(capsys, "warp", man, "--pixel", "5000,10", "-o", tmp_path / "p.pfm")
    assert code == 1 and not (tmp_path / "p.pfm").exists()


def test_usage_error_exit_code():
    r = subprocess.run([sys.executable, "-m", "illumkit", "eval"], capture_output=True, text=True)
    assert r.returncode == 2 and "usage" in r.stderr


def test_human_output(capsys, hdr_map):
    assert main(["eval", str(hdr_map), str(hdr_map)]) == 0
    assert "l2_log: 0.0" in capsys.readouterr().out
