import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fblab import cli, io
from fblab.domain import BallDomain, BoxDomain, build_grid

DISK = {"kind": "ball", "center": [0, 0], "radius": 1.0}


def run_cli(config: dict, out: Path, *extra, threads: int | None = None):
    path = out.parent / f"{out.name}.json"
    path.write_text(json.dumps(config))
    env = dict(os.environ)
    if threads is not None:
        env["FB_LAB_THREADS"] = str(threads)
    return subprocess.run([sys.executable, "-m", "fblab.cli", "run", str(path), "--out", str(out), *extra],
                          capture_output=True, text=True, env=env)


# ---------------------------------------------------------------------------
# exports


def test_constant_field_pgm_is_all_zero(tmp_path):
    path, rng = io.write_pgm(tmp_path / "c.pgm", np.full((5, 4), 3.5))
    assert rng == (3.5, 3.5)
    data = path.read_bytes()
    assert data.startswith(b"P5\n5 4\n255\n")
    assert set(data[len(b"P5\n5 4\n255\n"):]) == {0}


def test_pgm_orientation_and_roundtrip(tmp_path):
    img = np.zeros((3, 2))
    img[2, 1] = 1.0  # last along axis 0 = right, last along axis 1 = top
    path, _ = io.write_pgm(tmp_path / "o.pgm", img)
    raster = np.frombuffer(path.read_bytes()[len(b"P5\n3 2\n255\n"):], np.uint8).reshape(2, 3)
    assert raster[0, 2] == 255 and raster.sum() == 255
    assert np.array_equal(io.read_pgm(path), (img * 255).astype(np.uint8))


@settings(max_examples=30)
@given(arrays(np.float64, (4, 3), elements=st.floats(-1e6, 1e6)))
def test_gray_scaling_properties(values):
    gray, (lo, hi) = io.to_gray(values)
    assert gray.dtype == np.uint8
    if hi > lo:
        assert gray.min() == 0 and gray.max() == 255
        # min-max scaling preserves order
        order = np.argsort(values, axis=None, kind="stable")
        assert np.all(np.diff(gray.ravel()[order].astype(int)) >= 0)
    else:
        assert np.all(gray == 0)


def test_gray_ignores_nonfinite():
    gray, rng = io.to_gray(np.array([[np.nan, 1.0], [2.0, np.inf]]))
    assert rng == (1.0, 2.0)
    assert gray.tolist() == [[0, 0], [255, 0]]


def test_scalar_csv_rows(tmp_path):
    path = io.write_csv(tmp_path / "f.csv", np.arange(9.0).reshape(3, 3))
    lines = path.read_text().splitlines()
    assert lines[0] == "i,j,u"
    assert len(lines) == 10
    assert lines[4] == "1,0,3.0"


def test_grid_csv_has_coordinates_and_class(tmp_path):
    grid = build_grid(BoxDomain((-1.0, -1.0), (1.0, 1.0)), 0.5)
    v = np.stack([grid.coords[..., 0], -grid.coords[..., 1]], -1)
    rec = io.export_field(v, tmp_path / "v", "csv", grid)
    lines = rec.paths[0].read_text().splitlines()
    assert lines[0] == "x,y,class,u0,u1"
    assert len(lines) == 1 + grid.coords[..., 0].size
    assert lines[1].split(",")[2] == "boundary"


def test_3d_vector_field_gives_three_slices(tmp_path):
    grid = build_grid(BallDomain((0.0, 0.0, 0.0), 1.0), 0.25)
    rec = io.export_field(grid.coords, tmp_path / "map", "pgm", grid, mask=grid.active)
    assert sorted(p.name for p in rec.paths) == ["map-xy.pgm", "map-xz.pgm", "map-yz.pgm"]
    assert set(rec.normalization) == {"map-xy.pgm", "map-xz.pgm", "map-yz.pgm"}
    csv = io.export_field(grid.coords, tmp_path / "map", "csv", grid)
    assert sorted(p.name for p in csv.paths) == ["map-xy.csv", "map-xz.csv", "map-yz.csv"]


def test_export_rejects_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        io.export_field(np.zeros((2, 2)), tmp_path / "x", "png")


def test_write_table_union_of_keys(tmp_path):
    path = io.write_table(tmp_path / "t.csv", [{"a": 1, "b": True}, {"c": 0.5}])
    assert path.read_text().splitlines() == ["a,b,c", "1,true,", ",,0.5"]


# ---------------------------------------------------------------------------
# config validation


def test_missing_radius_names_field():
    exp = {"kind": "geodesic", "a": [-2, 0], "b": [2, 0], "body": {"kind": "ball", "center": [0, 0]}}
    with pytest.raises(cli.UsageError) as err:
        cli.parse_config({"experiment": exp})
    assert err.value.path == "experiment.body.radius"


@pytest.mark.parametrize("exp, where", [
    ({"kind": "scalar_obstacle", "h": -0.1}, "experiment.h"),
    ({"kind": "nope"}, "experiment.kind"),
    ({"kind": "axisym", "h": 0.1}, "experiment.k"),
    ({"kind": "scalar_obstacle", "h": 0.1, "solver": {"tol": 0}}, "experiment.solver.tol"),
    ({"kind": "geodesic", "a": [0, 0, 0], "b": [2, 0], "body": DISK}, "experiment.a"),
])
def test_usage_errors_carry_paths(exp, where):
    with pytest.raises(cli.UsageError) as err:
        cli.parse_config({"experiment": exp})
    assert err.value.path == where


def test_batch_names_must_be_unique():
    exp = {"kind": "geodesic", "name": "g", "a": [-2, 0], "b": [2, 0], "body": DISK}
    with pytest.raises(cli.UsageError):
        cli.parse_config({"experiments": [exp, exp]})


def test_worker_count_reads_env(monkeypatch):
    monkeypatch.setenv("FB_LAB_THREADS", "2")
    assert cli.worker_count(5) == 2 and cli.worker_count(1) == 1
    monkeypatch.setenv("FB_LAB_THREADS", "zero")
    with pytest.raises(cli.UsageError):
        cli.worker_count(3)


def test_cli_usage_exit_code(tmp_path):
    res = run_cli({"experiment": {"kind": "geodesic", "a": [-2, 0], "b": [2, 0],
                                  "body": {"kind": "ball", "center": [0, 0]}}}, tmp_path / "bad")
    assert res.returncode == cli.EXIT_USAGE
    assert "body.radius" in res.stderr


# ---------------------------------------------------------------------------
# runs


def test_geodesic_run(tmp_path):
    exp = {"kind": "geodesic", "a": [-2, 0], "b": [2, 0], "body": DISK}
    [m] = cli.run_batch(cli.parse_config({"experiment": exp}), tmp_path)
    assert m["status"] == "ok"
    assert m["summary"]["length"] == pytest.approx(2 * math.sqrt(3) + math.pi / 3, rel=0.01)
    assert m["summary"]["length"] == pytest.approx(4.5113, rel=0.01)


def test_parabola_run_via_cli(tmp_path):
    res = run_cli({"experiment": {"kind": "scalar_obstacle", "name": "p", "h": 1 / 512}}, tmp_path / "o", "--check")
    assert res.returncode == cli.EXIT_OK, res.stdout + res.stderr
    m = json.loads((tmp_path / "o" / "p" / "manifest.json").read_text())
    a = 1 - math.sqrt(0.5)
    lo, hi = m["summary"]["free_boundary"]
    assert abs(lo + a) <= 2 / 512 and abs(hi - a) <= 2 / 512
    assert m["deterministic"] is True and m["config"]["h"] == 1 / 512
    assert {"python", "numpy", "scipy"} <= set(m["versions"])


def test_manifest_lists_every_file(tmp_path):
    exps = [{"kind": "scalar_obstacle", "name": "cross", "problem": "cross", "h": 1 / 16},
            {"kind": "fixtures", "name": "fix", "h": 1 / 16, "k": [2], "legendre_n_max": 5}]
    cli.run_batch(cli.parse_config({"experiments": exps}), tmp_path)
    top = json.loads((tmp_path / "manifest.json").read_text())
    assert [e["name"] for e in top["experiments"]] == ["cross", "fix"]
    for e in top["experiments"]:
        d = tmp_path / e["name"]
        m = json.loads((d / "manifest.json").read_text())
        listed = {f["path"] for f in m["files"]}
        on_disk = {p.name for p in d.iterdir()} - {"manifest.json"}
        assert listed == on_disk
        for f in m["files"]:
            assert f["bytes"] == (d / f["path"]).stat().st_size
        pgms = {p for p in listed if p.endswith(".pgm")}
        assert pgms <= set(m["normalization"])


def test_solver_failure_writes_diagnostics(tmp_path):
    exp = {"kind": "axisym", "name": "ax", "h": 1 / 8, "k": 2, "scale": 2.0,
           "solver": {"max_iters": 2, "cascade": 0}}
    res = run_cli({"experiment": exp}, tmp_path / "o")
    assert res.returncode == cli.EXIT_SOLVER
    d = tmp_path / "o" / "ax"
    m = json.loads((d / "manifest.json").read_text())
    assert m["status"] == "solver_failure"
    assert {"diagnostics.json", "last_iterate.npy"} <= {f["path"] for f in m["files"]}


def test_check_flag_sets_exit_status(tmp_path):
    # the long-side path is not the 2 sqrt 3 + 5 pi / 3 curve, so this built-in check fails
    exp = {"kind": "geodesic", "name": "g", "a": [-2, 0], "b": [2, 0], "body": DISK, "init": "long",
           "expect_length": 2 * math.sqrt(3) + 5 * math.pi / 3}
    assert run_cli({"experiment": exp}, tmp_path / "a").returncode == cli.EXIT_OK
    assert run_cli({"experiment": exp}, tmp_path / "b", "--check").returncode == cli.EXIT_CHECK


def test_csv_outputs_independent_of_thread_cap(tmp_path):
    exps = [{"kind": "scalar_obstacle", "name": "cross", "problem": "cross", "h": 1 / 16},
            {"kind": "constraint_map", "name": "map", "h": 0.25,
             "body": {"kind": "ball", "center": [0.1, 0, 0], "radius": 1.0}},
            {"kind": "geodesic", "name": "geo", "random_instances": 3, "body": DISK}]
    runs = {}
    for n in (1, 2):
        out = tmp_path / f"t{n}"
        assert run_cli({"experiments": exps}, out, threads=n).returncode == cli.EXIT_OK
        runs[n] = {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*.csv"))}
    assert runs[1] and runs[1] == runs[2]
