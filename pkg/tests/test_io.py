import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planarfault import cli, formats
from planarfault.config import ScenarioConfig, config_hash, dump_config, load_config, parse_config
from planarfault.errors import ConfigError, DataError, GeometryError
from planarfault.grid import GeometryParam, Rake
from planarfault.synth import add_noise, exact_displacements, synthesize

import scenarios

SMALL_CONFIG = """\
[fault]
n_side = 8

[box]
a_range = -0.4, -0.2
b_range = -0.25, -0.05
d_range = -18, -10
n_a = 3
n_b = 3
n_d = 3

[noise]
sigma_hor = 0.5
sigma_ver = 1.5
"""


# --- config ------------------------------------------------------------------

def test_default_config_round_trip():
    cfg = ScenarioConfig()
    assert parse_config(dump_config(cfg)) == cfg


pos = st.floats(1e-3, 1e3, allow_nan=False)


@st.composite
def ranges(draw, lo=-50.0, hi=50.0):
    a = draw(st.floats(lo, hi, allow_nan=False))
    b = draw(st.floats(lo, hi, allow_nan=False))
    return (min(a, b), max(a, b) + 1e-3)


@settings(max_examples=60, deadline=None)
@given(lam=pos, mu=pos, center=st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
       half=st.tuples(pos, pos), n_side=st.integers(1, 60),
       rake=st.one_of(st.just("steepest-ascent"),
                      st.floats(-180, 180).map(lambda d: str(Rake(np.radians(d))))),
       ar=ranges(), br=ranges(), dr=ranges(-60, -1), n=st.tuples(*[st.integers(2, 40)] * 3),
       sig=st.one_of(st.none(), pos), err=st.floats(1e-4, 0.999), tau=pos,
       c=st.one_of(st.none(), st.floats(1e-12, 1e6)), seed=st.integers(0, 2**31),
       mode=st.sampled_from(["explicit", "weighted-station-mean"]))
def test_config_round_trip_property(lam, mu, center, half, n_side, rake, ar, br, dr, n, sig, err,
                                    tau, c, seed, mode):
    cfg = ScenarioConfig(lam=lam, mu=mu, center_mode=mode, center=center, half_lengths=half,
                         n_side=n_side, rake=rake, a_range=ar, b_range=br, d_range=dr,
                         n_a=n[0], n_b=n[1], n_d=n[2], sigma_hor=sig, sigma_ver=sig,
                         err_rel=err, tau=tau, c_override=c, seed=seed)
    text = dump_config(cfg)
    back = parse_config(text)
    assert back == cfg
    assert dump_config(back) == text
    assert config_hash(back) == config_hash(cfg)


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown config section"):
        parse_config("[extra]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("[medium]\nnu = 0.25\n")
    with pytest.raises(ConfigError, match="bad value"):
        parse_config("[fault]\nn_side = many\n")
    with pytest.raises(ConfigError):
        parse_config("[inversion]\nerr_rel = 1.5\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")
    cfg = parse_config("[medium]\nlambda = 2.0\n[noise]\nsigma_hor = station\n")
    assert cfg.lam == 2.0 and cfg.sigma_hor is None


# --- stations ----------------------------------------------------------------

def test_example_station_file():
    st_ = formats.load_stations(scenarios.STATION_FILE, require_displacements=False)
    assert len(st_) == 11
    assert "ACAP" in st_.names
    with pytest.raises(DataError, match="missing displacement"):
        formats.load_stations(scenarios.STATION_FILE)


def test_station_file_errors(tmp_path):
    header = ",".join(formats.STATION_COLUMNS) + "\n"
    p = tmp_path / "s.csv"
    p.write_text("")
    with pytest.raises(DataError, match="empty"):
        formats.load_stations(p)
    p.write_text(header)
    with pytest.raises(DataError, match="no stations"):
        formats.load_stations(p)
    p.write_text(header + "ACAP,0,0,1,2,3,1,1\nACAP,1,1,1,2,3,1,1\n")
    with pytest.raises(DataError, match="ACAP"):
        formats.load_stations(p)
    p.write_text("# comment\n" + header + "A,0,0,1,2,3,1,1\nB,x,0,1,2,3,1,1\n")
    with pytest.raises(DataError, match=":4:"):
        formats.load_stations(p)
    p.write_text(header + "A,0,0,1,2\n")
    with pytest.raises(DataError, match=":2:"):
        formats.load_stations(p)
    p.write_text(header + "A,0,0,1,2,3,0,1\n")
    with pytest.raises(DataError):
        formats.load_stations(p)


def test_station_write_read_round_trip(tmp_path):
    noisy, _ = scenarios.synthetic()
    p = tmp_path / "s.csv"
    formats.write_stations(noisy, p, comment="test")
    back = formats.load_stations(p)
    assert back.names == noisy.names
    np.testing.assert_array_equal(back.measured_u, noisy.measured_u)
    np.testing.assert_array_equal(back.positions, noisy.positions)


# --- synthetic data ------------------------------------------------------------

def test_zero_noise_reproduces_forward_prediction():
    truth = scenarios.truth()
    noisy, exact = synthesize(truth, scenarios.template(), 0.0, 0.0, seed=5)
    np.testing.assert_array_equal(noisy.measured_u, exact)
    np.testing.assert_array_equal(noisy.sigma_hor, scenarios.template().sigma_hor)
    np.testing.assert_array_equal(
        exact, exact_displacements(truth, scenarios.template().positions))


def test_slip_sampled_on_interior_nodes():
    # only interior nodes carry slip; the rectangle boundary is held at zero
    truth = scenarios.truth()
    from planarfault.synth import slip_values
    v = slip_values(truth).reshape(truth.grid.n_side, truth.grid.n_side)
    assert v.max() == pytest.approx(1000.0, rel=1e-2)
    assert truth.grid.nodes.shape[0] == v.size


def test_noise_statistics():
    rng = np.random.default_rng(0)
    u = np.zeros((11, 3))
    samples = np.stack([add_noise(u, 0.5, 1.5, rng) for _ in range(1000)])
    sh = samples[..., :2].std()
    sv = samples[..., 2].std()
    assert abs(sh - 0.5) <= 0.05 * 0.5
    assert abs(sv - 1.5) <= 0.05 * 1.5


def test_truth_guard_violation():
    truth = scenarios.truth(m=GeometryParam(-0.3, -0.15, -1.0))
    with pytest.raises(GeometryError):
        synthesize(truth, scenarios.template(), 0.5, 1.5, seed=0)


def test_truth_record_round_trip(tmp_path):
    truth = scenarios.truth(rake=Rake(np.radians(20.0)))
    p = tmp_path / "truth.json"
    formats.write_json(formats.truth_to_dict(truth), p)
    back = formats.load_truth(p)
    assert back.m == truth.m and back.rake == truth.rake and back.bumps == truth.bumps
    p.write_text("{")
    with pytest.raises(DataError):
        formats.load_truth(p)
    with pytest.raises(DataError):
        formats.truth_from_dict({"m": [0, 0]})


# --- command line ----------------------------------------------------------------

@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "cfg.ini").write_text(SMALL_CONFIG)
    formats.write_json(formats.truth_to_dict(scenarios.truth()), d / "truth.json")
    return d


def run_cli(*args):
    return cli.main([str(a) for a in args])


def test_synth_is_deterministic(workdir):
    for out in ("s1", "s2"):
        assert run_cli("synth", "--config", workdir / "cfg.ini", "--truth", workdir / "truth.json",
                       "--stations", scenarios.STATION_FILE, "--out", workdir / out,
                       "--seed", 7) == 0
    a = (workdir / "s1" / "stations.csv").read_bytes()
    assert a == (workdir / "s2" / "stations.csv").read_bytes()
    assert formats.load_stations(workdir / "s1" / "stations.csv").has_displacements


@pytest.fixture(scope="module")
def pipeline_run(workdir):
    run_cli("synth", "--config", workdir / "cfg.ini", "--truth", workdir / "truth.json",
            "--stations", scenarios.STATION_FILE, "--out", workdir / "data", "--seed", 1)
    stations = workdir / "data" / "stations.csv"
    assert run_cli("run", "--config", workdir / "cfg.ini", "--stations", stations,
                   "--out", workdir / "run") == 0
    return workdir, stations


def test_run_outputs(pipeline_run):
    d, _ = pipeline_run
    out = d / "run"
    man = json.loads((out / "manifest.json").read_text())
    assert man["schema_version"] == formats.MANIFEST_VERSION
    assert man["c_source"] == "discrepancy" and man["global_C"] > 0
    assert set(man["per_cell_C"]) >= {"min", "max", "median", "n_valid"}
    assert man["runtime"]["wall_time_s"] >= 0
    for name, art in man["artifacts"].items():
        assert formats.file_sha256(out / art["path"]) == art["sha256"]
    grid = formats.read_table(out / "posterior_grid.csv", formats.GRID_COLUMNS)
    assert grid.shape == (27, 5)
    for axis in "abd":
        tab = formats.read_table(out / f"marginal_{axis}.csv", formats.MARGINAL_COLUMNS)
        assert tab.shape == (3, 2)
    slip = formats.read_table(out / "slip.csv", formats.SLIP_COLUMNS)
    assert slip.shape == (64, 4) and np.all(slip[:, 3] > 0)


def test_manifest_alone_reproduces_run(pipeline_run):
    d, _ = pipeline_run
    assert run_cli("run", "--manifest", d / "run" / "manifest.json", "--out", d / "rerun") == 0
    first = json.loads((d / "run" / "manifest.json").read_text())
    second = json.loads((d / "rerun" / "manifest.json").read_text())
    first.pop("runtime"), second.pop("runtime")
    assert first == second
    for art in first["artifacts"].values():
        assert (d / "run" / art["path"]).read_bytes() == (d / "rerun" / art["path"]).read_bytes()


def test_staged_commands_match_run(pipeline_run):
    d, stations = pipeline_run
    common = ["--config", d / "cfg.ini", "--stations", stations, "--out", d / "staged"]
    assert run_cli("select-c", *common) == 0
    assert run_cli("sweep", *common) == 0
    assert run_cli("marginals", "--out", d / "staged") == 0
    assert run_cli("slip-stats", *common) == 0
    for name in ("posterior_grid.csv", "marginal_a.csv", "map.json", "slip.csv", "per_cell_C.csv"):
        assert (d / "staged" / name).read_bytes() == (d / "run" / name).read_bytes()


def test_posterior_grid_csv_round_trip(pipeline_run):
    d, _ = pipeline_run
    pg = formats.read_posterior_grid(d / "run" / "posterior_grid.csv")
    tab = formats.read_table(d / "run" / "posterior_grid.csv", formats.GRID_COLUMNS)
    np.testing.assert_allclose(pg.density.ravel(), tab[:, 3], rtol=1e-12)


def test_c_override_recorded(pipeline_run):
    d, stations = pipeline_run
    assert run_cli("run", "--config", d / "cfg.ini", "--stations", stations, "--out", d / "ovr",
                   "--c-override", 6e-4) == 0
    man = json.loads((d / "ovr" / "manifest.json").read_text())
    assert man["global_C"] == 6e-4 and man["c_source"] == "override"
    assert not (d / "ovr" / "c_selection.json").exists()


def test_exit_codes(pipeline_run, tmp_path):
    d, stations = pipeline_run
    assert run_cli("run", "--config", tmp_path / "nope.ini", "--stations", stations,
                   "--out", tmp_path / "o") == cli.EXIT_CONFIG
    assert run_cli("run", "--config", d / "cfg.ini", "--stations", scenarios.STATION_FILE,
                   "--out", tmp_path / "o") == cli.EXIT_DATA
    assert run_cli("sweep", "--config", d / "cfg.ini", "--stations", stations,
                   "--out", tmp_path / "o2") == cli.EXIT_DATA  # no cached C
    assert run_cli("run", "--set", "n_side=0", "--stations", stations,
                   "--out", tmp_path / "o") == cli.EXIT_CONFIG
    assert run_cli("run", "--set", "bogus=1", "--stations", stations,
                   "--out", tmp_path / "o") == cli.EXIT_CONFIG
    # every geometry of this box breaks the depth guard
    assert run_cli("run", "--config", d / "cfg.ini", "--stations", stations, "--out", tmp_path / "o",
                   "--set", "a_range=0.3,0.4", "--set", "b_range=0.3,0.4") == cli.EXIT_NUMERICAL


def test_stage_labels_in_errors(pipeline_run, tmp_path, capsys):
    d, stations = pipeline_run
    run_cli("run", "--config", d / "cfg.ini", "--stations", stations, "--out", tmp_path / "o",
            "--set", "a_range=0.3,0.4", "--set", "b_range=0.3,0.4")
    assert "[select-c]" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "planarfault.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("synth", "select-c", "sweep", "marginals", "slip-stats", "run"):
        assert sub in res.stdout


@pytest.mark.slow
def test_guerrero_scale_posterior_std(tmp_path):
    # synthetic stand-in near the reported most likely geometry, C fixed as in the real-data run
    m = GeometryParam(-0.13, -0.19, -18.0)
    noisy, _ = scenarios.synthetic(m=m, sigma=(1.0, 3.0), seed=2)
    cfg = ScenarioConfig(a_range=(-0.43, 0.17), b_range=(-0.49, 0.11), d_range=(-30.0, -6.0),
                         sigma_hor=1.0, sigma_ver=3.0, c_override=6e-4)
    from planarfault.pipeline import run_pipeline
    res = run_pipeline(cfg, noisy, tmp_path)
    assert res.manifest["global_C"] == 6e-4
    reported = np.array([0.020, 0.023, 1.7])
    ratio = np.array(res.map["posterior_std"]) / reported
    assert np.all(np.abs(np.log10(ratio)) <= 1.0), ratio
