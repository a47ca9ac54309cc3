import json

import pytest

from maxray import __version__
from maxray.cli import EXIT_GATE, EXIT_OK, EXIT_USAGE, main
from maxray.io import RunManifest, read_csv, read_tensor

# --- Fixtures ---

CRYSTAL = """\
schema_version = 1

[material]
kind = "rods"
radius = 0.2
eps_rod = 8.9
smoothing_width = 0.05
resolution = 16

[basis]
gmax = 1.5
sector = "tm"

[kgrid]
counts = [6, 6]
shift = [0.5, 0.5]

[band]
index = 1
n_bands = 2
"""

VACUUM_PATH = """\
schema_version = 1

[basis]
gmax = 1.5
sector = "tm"

[kgrid]
path = [["G", [0.0, 0.0]], ["X", [0.5, 0.0]], ["M", [0.5, 0.5]]]
points_per_segment = 4

[band]
n_bands = 2
"""

RAYS = """
[rays]
points = [[0.0, 0.0, 0.2, 0.1], [0.5, -0.5, 0.1, 0.3]]
t_final = 0.5
lam = 0.1
samples = 5
flows = ["scalar", "nonscalar"]
"""

SWEEP = """\
schema_version = 1

[material]
kind = "rods"
radius = 0.3
eps_rod = 2.0
smoothing_width = 0.1
resolution = 16

[basis]
gmax = 1.5
sector = "tm"

[kgrid]
counts = [5, 5]

[state]
r0 = [0.0, 0.0]
k0 = [0.25, 0.1]
width = 0.5
proceed = true

[sweep]
lambdas = [0.5, 0.4, 0.3]
times = [0.0, 0.2]
extent = [3.0, 3.0]
samples = 3

[tolerances]
self_convergence = 0.0
"""


@pytest.fixture
def write(tmp_path):
    def _write(text, name="run.toml"):
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write


def run(config, out, *extra):
    return main([extra[0] if extra else "bands", "--config", str(config), "--out", str(out), "-q", *extra[1:]])


# --- 1. Usage ---


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["spectra", "--config", "x.toml"], ["bands"]])
def test_usage_errors_exit_one(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == EXIT_USAGE


def test_config_errors_exit_one(write, tmp_path):
    assert run(tmp_path / "missing.toml", tmp_path / "out") == EXIT_USAGE
    assert run(write("[basis]\ngmax = 1.0\n"), tmp_path / "out") == EXIT_USAGE
    assert run(write(VACUUM_PATH + "\n[basis_extra]\n"), tmp_path / "out") == EXIT_USAGE
    assert run(write(CRYSTAL), tmp_path / "out", "rays") == EXIT_USAGE


def test_threads_must_be_positive(write, tmp_path):
    assert run(write(VACUUM_PATH), tmp_path / "out", "bands", "--threads", "0") == EXIT_USAGE


# --- 2. Subcommands ---


def test_bands_along_path(write, tmp_path):
    out = tmp_path / "out"
    assert run(write(VACUUM_PATH), out) == EXIT_OK

    header, rows = read_csv(out / "bands_path.csv")
    assert header == ["index", "label", "distance", "k1", "k2", "omega_1", "omega_2"]
    assert len(rows) == 9
    assert [rows[i][1] for i in (0, 4, 8)] == ["G", "X", "M"]
    assert float(rows[4][5]) == pytest.approx(3.141592653589793)

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "bands"
    assert set(manifest["outputs"]) == {"bands_path.csv", "weights.mxt"}
    assert manifest["gates"] == {"weights": True}
    assert RunManifest.verify(out) == []


def test_bands_on_grid(write, tmp_path):
    out = tmp_path / "out"
    assert run(write(CRYSTAL), out, "bands", "--threads", "2") == EXIT_OK
    values, axes = read_tensor(out / "bands.mxt")
    assert values.shape == (36, 2) and axes == ["k", "band"]
    gaps = json.loads((out / "gaps.json").read_text())
    assert set(gaps) == {"1", "2"}
    assert gaps["1"]["passed"]
    assert {"dos.csv", "gaps.json", "kpoints.mxt"} <= set(json.loads((out / "manifest.json").read_text())["outputs"])


def test_output_prefix_and_tensor_switch(write, tmp_path):
    out = tmp_path / "out"
    assert run(write(CRYSTAL + '\n[output]\ntensors = false\nprefix = "rods_"\n'), out) == EXIT_OK
    names = set(json.loads((out / "manifest.json").read_text())["outputs"])
    assert names == {"rods_dos.csv", "rods_gaps.json"}


def test_cached_fixture_gives_same_bands(write, tmp_path, monkeypatch):
    monkeypatch.setenv("MAXRAY_CACHE", str(tmp_path / "cache"))
    config = write(CRYSTAL)
    assert run(config, tmp_path / "first") == EXIT_OK
    assert len(list((tmp_path / "cache").iterdir())) == 1
    assert run(config, tmp_path / "second") == EXIT_OK
    first = json.loads((tmp_path / "first" / "manifest.json").read_text())["outputs"]
    second = json.loads((tmp_path / "second" / "manifest.json").read_text())["outputs"]
    assert first["bands.mxt"] == second["bands.mxt"]


def test_partial_cache_entry_is_recomputed(write, tmp_path, monkeypatch):
    monkeypatch.setenv("MAXRAY_CACHE", str(tmp_path / "cache"))
    config = write(CRYSTAL)
    assert run(config, tmp_path / "first") == EXIT_OK
    (entry,) = (tmp_path / "cache").iterdir()
    (entry / "vectors.mxt").unlink()
    assert run(config, tmp_path / "second") == EXIT_OK
    assert (entry / "vectors.mxt").exists()
    first = json.loads((tmp_path / "first" / "manifest.json").read_text())["outputs"]
    second = json.loads((tmp_path / "second" / "manifest.json").read_text())["outputs"]
    assert first["bands.mxt"] == second["bands.mxt"]


def test_geometry(write, tmp_path):
    out = tmp_path / "out"
    assert run(write(CRYSTAL), out, "geometry") == EXIT_OK
    header, rows = read_csv(out / "geometry.csv")
    assert header == ["k1", "k2", "omega", "v1", "v2", "poynting_x", "poynting_y", "poynting_z", "curvature"]
    assert len(rows) == 36
    report = json.loads((out / "geometry.json").read_text())
    assert report["chern"] == 0 and report["band"] == 1


def test_rays(write, tmp_path):
    out = tmp_path / "out"
    assert run(write(CRYSTAL + RAYS), out, "rays") == EXIT_OK
    header, rows = read_csv(out / "rays.csv")
    assert header == ["flow", "ray", "t", "r1", "r2", "k1", "k2", "omega"]
    assert len(rows) == 2 * 2 * 5
    drift = json.loads((out / "rays.json").read_text())["drift"]
    assert set(drift) == {"scalar", "nonscalar"}
    assert all(d < 1e-8 for values in drift.values() for d in values)
    assert json.loads((out / "manifest.json").read_text())["gates"]["drift"] is True


MODULATED_RAYS = RAYS + """
[modulation.epsilon]
kind = "gaussian_bump"
strength = 0.3
width = 1.5
center = [0.4, -0.2]
"""


def test_modulated_rays_pass_the_drift_gate(write, tmp_path):
    out = tmp_path / "out"
    assert run(write(CRYSTAL + MODULATED_RAYS.replace("t_final = 0.5", "t_final = 5.0")), out, "rays") == EXIT_OK
    report = json.loads((out / "rays.json").read_text())
    assert max(max(values) for values in report["drift"].values()) < 1e-8
    assert report["velocity_consistency"] > 0


def test_ray_points_need_phase_space_entries(write, tmp_path):
    bad = RAYS.replace("[0.5, -0.5, 0.1, 0.3]", "[0.5, -0.5, 0.1]")
    assert run(write(CRYSTAL + bad), tmp_path / "out", "rays") == EXIT_USAGE


@pytest.mark.slow
def test_failed_gate_exits_two(write, tmp_path):
    out = tmp_path / "out"
    assert run(write(SWEEP), out, "egorov") == EXIT_GATE
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["gates"]["self_convergence"] is False
    assert {"egorov.csv", "slopes.csv", "report.json"} <= set(manifest["outputs"])
