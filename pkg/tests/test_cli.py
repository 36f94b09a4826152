"""CLI dispatch, config handling, run-directory layout, and pixmap tests."""

import numpy as np
import pytest

from okpattern.cli import RunConfig, render_heatmap, run
from okpattern.torus_field import GridSpec, Lamella, ScalarField, rasterize, read_field


def test_unknown_subcommand_exits_2(capsys):
    assert run(["frobnicate"]) == 2


def test_missing_subcommand_exits_2():
    assert run([]) == 2


def test_energy_subcommand_closed_form(tmp_path):
    out = tmp_path / "run"
    code = run(
        [
            "energy",
            "--shape", "lamella",
            "--w", "0.25",
            "--gamma", "48",
            "--grid", "256,256",
            "--out", str(out),
        ]
    )
    assert code == 0
    header, row = (out / "report.csv").read_text().strip().split("\n")
    assert header == "perimeter,nonlocal,gamma,total"
    total = float(row.split(",")[-1])
    assert total == pytest.approx(3.0, abs=1e-4)
    assert (out / "meta.txt").exists()
    assert (out / "fields" / "indicator.okf").exists()


def test_scaling_subcommand_k1_errors_zero(tmp_path):
    out = tmp_path / "run"
    code = run(
        [
            "scaling",
            "--shape", "lamella",
            "--w", "0.25",
            "--gamma", "1",
            "--k", "1,2,4",
            "--grid", "64,64",
            "--out", str(out),
        ]
    )
    assert code == 0
    lines = (out / "report.csv").read_text().strip().split("\n")
    k1 = lines[1].split(",")
    assert k1[0] == "1"
    assert float(k1[-3]) == 0.0 and float(k1[-2]) == 0.0 and float(k1[-1]) == 0.0


def test_green_flow_stability_gamma_limit(tmp_path):
    assert run(["green", "--grid", "64,64", "--out", str(tmp_path / "g")]) == 0
    assert (
        run(
            [
                "flow",
                "--grid", "32,32",
                "--eps", "0.08",
                "--steps", "20",
                "--out", str(tmp_path / "f"),
            ]
        )
        == 0
    )
    trace = (tmp_path / "f" / "report.csv").read_text().strip().split("\n")
    assert trace[0] == "step,dt,energy,mass,sup_update"
    assert len(trace) > 1
    assert run(["stability", "--out", str(tmp_path / "s")]) == 0
    assert (
        run(
            [
                "gamma-limit",
                "--grid", "1024",
                "--eps-list", "0.08,0.04",
                "--out", str(tmp_path / "gl"),
            ]
        )
        == 0
    )
    rows = (tmp_path / "gl" / "report.csv").read_text().strip().split("\n")
    assert len(rows) == 3


def test_construct_subcommand(tmp_path):
    out = tmp_path / "c"
    code = run(
        [
            "construct",
            "--grid", "32,32",
            "--k", "1,2",
            "--gamma", "1.0",
            "--eps", "0.08",
            "--steps", "150",
            "--out", str(out),
        ]
    )
    assert code == 0
    lines = (out / "report.csv").read_text().strip().split("\n")
    assert len(lines) == 3
    assert (out / "fields" / "tiled_k2.okf").exists()


def test_config_file_and_unknown_key(tmp_path):
    good = tmp_path / "ok.ini"
    good.write_text("[energy]\ngamma = 2.5\n\n[grid]\nsizes = 32,32\n")
    out = tmp_path / "r"
    assert run(["energy", "--config", str(good), "--out", str(out)]) == 0
    meta = (out / "meta.txt").read_text()
    assert "gamma = 2.5" in meta

    bad = tmp_path / "bad.ini"
    bad.write_text("[energy]\ngamsma = 2.5\n")
    assert run(["energy", "--config", str(bad), "--out", str(out)]) == 2

    badval = tmp_path / "badval.ini"
    badval.write_text("[energy]\ngamma = -3\n")
    assert run(["energy", "--config", str(badval), "--out", str(out)]) == 2


def test_config_round_trip_fixed_point(tmp_path):
    cfg = RunConfig.defaults()
    cfg.set("energy", "gamma", "12.5")
    cfg.set("grid", "sizes", "32,64")
    text = cfg.serialize()
    path = tmp_path / "c.ini"
    path.write_text(text)
    cfg2 = RunConfig.defaults()
    cfg2.update_from_file(path)
    assert cfg2.serialize() == text
    assert cfg2.values == cfg.values


def test_meta_is_reusable_config(tmp_path):
    out1 = tmp_path / "a"
    assert run(["energy", "--grid", "32,32", "--gamma", "7", "--out", str(out1)]) == 0
    out2 = tmp_path / "b"
    assert run(["energy", "--config", str(out1 / "meta.txt"), "--out", str(out2)]) == 0
    assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()


def test_render_2d_and_determinism(tmp_path):
    spec = GridSpec((16, 8))
    u = rasterize(Lamella(axis=0, center=0.5, halfwidth=0.25), spec)
    p1, p2 = tmp_path / "a.ppm", tmp_path / "b.ppm"
    render_heatmap(u, p1)
    render_heatmap(u, p2)
    b1 = p1.read_bytes()
    assert b1 == p2.read_bytes()
    assert b1.startswith(b"P6\n16 8\n255\n")
    # two-band image: bands of width w*n pixels along axis 0 (image columns)
    img = np.frombuffer(b1[len(b"P6\n16 8\n255\n"):], dtype=np.uint8).reshape(8, 16, 3)
    cols_inside = (img[0, :, 0] == 255).sum()
    assert cols_inside == 8  # 2*0.25*16


def test_render_constant_field_mid_gray(tmp_path):
    spec = GridSpec((8, 8))
    u = ScalarField(spec, np.zeros(spec.sizes))
    path = tmp_path / "c.ppm"
    render_heatmap(u, path)
    body = path.read_bytes().split(b"255\n", 1)[1]
    assert set(body) == {128}


def test_render_3d_slice_and_errors(tmp_path):
    spec = GridSpec((8, 8, 8))
    vals = np.zeros(spec.sizes)
    vals[:, :, 3] = 1.0
    u = ScalarField(spec, vals)
    path = tmp_path / "s.ppm"
    render_heatmap(u, path, axis=2, index=3)
    assert path.read_bytes().startswith(b"P6\n8 8\n255\n")
    with pytest.raises(ValueError, match="index"):
        render_heatmap(u, path, axis=2, index=99)
    with pytest.raises(ValueError):
        render_heatmap(u, path)


def test_render_cli_round_trip(tmp_path):
    spec = GridSpec((32, 32))
    u = rasterize(Lamella(axis=0, center=0.5, halfwidth=0.25), spec)
    from okpattern.torus_field import write_field

    fpath = tmp_path / "f.okf"
    write_field(u, fpath)
    out = tmp_path / "o.ppm"
    assert run(["render", str(fpath), str(out)]) == 0
    assert out.exists()
    assert run(["render", str(tmp_path / "missing.okf"), str(out)]) == 2


def test_threads_env_recorded(tmp_path, monkeypatch):
    monkeypatch.setenv("OKPATTERN_THREADS", "2")
    out = tmp_path / "t"
    assert run(["energy", "--grid", "32,32", "--out", str(out)]) == 0
    assert "threads = 2" in (out / "meta.txt").read_text()


def test_stability_thresholds_mode(tmp_path):
    out = tmp_path / "thr"
    cfg = tmp_path / "c.ini"
    cfg.write_text("[stability]\nw_list = 0.25\nthresholds = 1\n")
    assert run(["stability", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "report.csv").read_text().strip().split("\n")
    assert lines[1].split(",")[1] == "threshold"
    assert abs(float(lines[1].split(",")[2]) - 94.872) < 0.01


def test_construct_with_probes(tmp_path):
    out = tmp_path / "cp"
    cfg = tmp_path / "c.ini"
    cfg.write_text(
        "[construct]\nprobes = 20\nprobe_amplitude = 2\nk_list = 2\n\n"
        "[grid]\nsizes = 32,32\n\n[flow]\neps = 0.08\nmax_steps = 150\n"
    )
    assert run(["construct", "--config", str(cfg), "--out", str(out)]) == 0
