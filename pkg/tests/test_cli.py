import json
import subprocess
import sys

import pytest

from stslab.cli import main
from stslab.io_formats import read_stmesh
from stslab.scenes import benchmark


def write_config(tmp_path, name, **sections):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(benchmark(name, **sections)))
    return p


@pytest.fixture
def circle(tmp_path):
    return write_config(tmp_path, "stationary_circle", sizing={"h_box": 2.0, "h_shape": 0.7})


@pytest.fixture
def sphere(tmp_path):
    return write_config(tmp_path, "expanding_sphere", sizing={"h_box": 2.5, "h_shape": 1.0})


def test_split_demo(tmp_path, capsys):
    assert main(["split-demo", "--out", str(tmp_path)]) == 0
    c = read_stmesh(tmp_path / "split_C.stmesh")
    e = read_stmesh(tmp_path / "split_E.stmesh")
    printed = read_stmesh(tmp_path / "split_E_as_printed.stmesh")
    assert (c.n_cells, c.n_vertices) == (10, 9)
    assert e.n_cells == 14
    assert (printed.n_cells, printed.n_vertices) == (14, 7)
    assert read_stmesh(tmp_path / "reference_prism.stmesh").n_vertices == 6
    assert "split_E_as_printed" in capsys.readouterr().out


def test_generate_circle(tmp_path, circle, capsys):
    out = tmp_path / "out"
    assert main(["generate", "--config", str(circle), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.glob("*.stmesh")) == ["slab_000.stmesh", "slab_001.stmesh"]
    assert len(list(out.glob("*.vtk"))) == 2
    summary = json.loads((out / "summary.json").read_text())
    assert [s["closed"] for s in summary["slabs"]] == [True, True]
    assert all(s["hull_measure"] > 0 for s in summary["slabs"])
    assert summary["exact"] == pytest.approx(240.0)
    text = capsys.readouterr().out
    assert "hull_measure" in text
    assert json.loads(text.strip().splitlines()[-1]) == summary


def test_generate_strategy_c(tmp_path, sphere):
    out = tmp_path / "out"
    assert main(["generate", "--config", str(sphere), "--out", str(out), "--strategy", "C"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["slabs"][0]["tets_per_prism"] == 10
    assert main(["generate", "--config", str(sphere), "--out", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text())["slabs"][0]["tets_per_prism"] == 14


def test_measure(tmp_path, circle, capsys):
    assert main(["measure", "--config", str(circle), "--out", str(tmp_path)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["exact"] == pytest.approx(240.0)
    assert 0 < info["error"] < 1.0
    assert info["slabs"] == 2


def test_verify(tmp_path, sphere, capsys):
    assert main(["verify", "--config", str(sphere), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.strip().endswith("PASS")
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["ok"] and report["domain_boundary"]


def test_convergence_writes_csv_and_meshes(tmp_path, circle, capsys):
    code = main(["convergence", "--config", str(circle), "--out", str(tmp_path), "--levels", "3"])
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert lines[0] == "mesh_index,elements,vertices,spacing_proxy,approx,exact,error"
    assert len(lines) == 4
    assert len(list(tmp_path.glob("level_*.stmesh"))) == 3
    out = capsys.readouterr().out
    assert "fitted rate" in out
    assert code == (0 if "PASS" in out else 3)


def test_two_levels_is_usage_error(tmp_path, circle, capsys):
    assert main(["convergence", "--config", str(circle), "--out", str(tmp_path), "--levels", "2"]) == 1
    assert "at least 3" in capsys.readouterr().err
    assert not (tmp_path / "convergence.csv").exists()


def test_bad_factor(tmp_path, circle):
    assert main(["convergence", "--config", str(circle), "--out", str(tmp_path), "--factor", "3"]) == 1


def test_invalid_config_exit_1(tmp_path, capsys):
    doc = benchmark("stationary_circle")
    doc["shapes"][0]["radius"] = -1.0
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert main(["generate", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert "/shapes/0/radius" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["generate", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 1


def test_rotating_ellipsoid_tangles(tmp_path, capsys):
    p = write_config(tmp_path, "rotating_ellipsoid", time={"t0": 0.0, "tf": 1.0, "slabs": 1},
                     mesher={"terminating": "topology_transfer"})
    code = main(["generate", "--config", str(p), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "slab 0" in err and "TanglingError" in err and "smaller h_time" in err


def test_threads(tmp_path, circle, capsys):
    assert main(["measure", "--config", str(circle), "--out", str(tmp_path), "--threads", "0"]) == 1
    assert main(["measure", "--config", str(circle), "--out", str(tmp_path), "--threads", "1"]) == 0


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["generate"])
    assert ei.value.code == 1
    with pytest.raises(SystemExit) as ei:
        main(["generate", "--config", "x", "--strategy", "B"])
    assert ei.value.code == 1


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "stslab", "split-demo", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert "split_C" in r.stdout
