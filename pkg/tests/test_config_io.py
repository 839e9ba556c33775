import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biasobs.config import SimConfig, load_config, parse_config, serialize_config
from biasobs.errors import BadConfig, MissingCSV
from biasobs.experiment import CSV_COLUMNS, bias_of, run_experiment, summary_from_csv
from biasobs.io import emit_plots, read_csv, read_pfm, read_pgm, write_csv, write_pfm, write_pgm

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_serialize_parse_roundtrip():
    cfg = SimConfig()
    cfg.scene.dims = (8.0, 6.0, 3.0)
    cfg.trajectory.w_z = ((0.3, 0.13, 1.5), (0.1, 0.5, 0.0))
    cfg.noise.seed = 17
    cfg.run.scheme = "upwind3"
    assert parse_config(serialize_config(cfg)) == cfg


def test_defaults_are_valid():
    cfg = SimConfig().validate()
    assert cfg.n_frames == int(round(cfg.trajectory.duration * cfg.grid.rate)) + 1


@pytest.mark.parametrize(
    "text",
    [
        "grid.width = 2",
        "scene.type = cube",
        "gains.k_y = 0",
        "noise.sigma_y = -1",
        "run.scheme = spectral",
        "grid.fov_h = 180",
        "trajectory.look = 0, 0, 0",
        "bias.p_v = 1, 2",
        "trajectory.v_x = 1 2",
        "nonsense",
        "grid.nope = 1",
        "a.b.c = 1",
        "grid.width = wide",
    ],
)
def test_bad_configs(text):
    with pytest.raises(BadConfig):
        parse_config(text)


def test_comments_and_blank_lines(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# header\n\ngrid.width = 32  # narrow\ngrid.height = 24\n")
    cfg = load_config(p)
    assert (cfg.grid.width, cfg.grid.height) == (32, 24)
    with pytest.raises(BadConfig):
        load_config(tmp_path / "missing.cfg")


def test_packaged_config_loads():
    from importlib.resources import files

    cfg = load_config(files("biasobs") / "data" / "desk.cfg")
    assert (cfg.grid.width, cfg.grid.height, cfg.grid.rate) == (160, 120, 42.0)
    assert cfg.bias.p_v == (2.5, 0.0, 0.0) and cfg.bias.p_w == (0.05, 0.0, 0.0)


def test_pgm_roundtrip(tmp_path):
    y = np.random.default_rng(0).integers(1, 257, size=(7, 9)).astype(float)
    write_pgm(tmp_path / "a.pgm", y)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), y)
    assert (tmp_path / "a.pgm").read_bytes()[:11] == b"P5\n9 7\n255\n"


@settings(max_examples=20, deadline=None)
@given(st.lists(finite, min_size=12, max_size=12))
def test_pfm_roundtrip(tmp_path_factory, vals):
    path = tmp_path_factory.mktemp("pfm") / "a.pfm"
    f = np.array(vals).reshape(3, 4)
    write_pfm(path, f)
    assert np.array_equal(read_pfm(path), f.astype(np.float32).astype(float))


def test_csv_roundtrip_and_missing(tmp_path):
    rows = np.array([[0.0, 1.5, -2e-7], [0.5, 3.25, 1e9]])
    write_csv(tmp_path / "d.csv", ["t", "a", "b"], rows)
    cols, back = read_csv(tmp_path / "d.csv")
    assert cols == ["t", "a", "b"] and np.array_equal(back, rows)
    with pytest.raises(MissingCSV):
        read_csv(tmp_path / "none.csv")
    (tmp_path / "empty.csv").write_text("t,a\n")
    with pytest.raises(MissingCSV):
        read_csv(tmp_path / "empty.csv")


def small_config():
    cfg = SimConfig()
    cfg.grid.width, cfg.grid.height = 32, 24
    cfg.trajectory.duration = 0.2
    return cfg


def test_diagnostics_csv_schema_and_determinism(tmp_path):
    a = run_experiment(small_config(), tmp_path / "a")
    b = run_experiment(small_config(), tmp_path / "b")
    header = (tmp_path / "a" / "diagnostics.csv").read_bytes().split(b"\n", 1)[0]
    assert header == ",".join(CSV_COLUMNS).encode()
    assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()
    assert len(a.rows) == small_config().n_frames
    # the summary can be recomputed from the CSV alone
    again = summary_from_csv(a.csv_path, bias_of(small_config()))
    assert again["rel_pv"] == pytest.approx(a.summary["rel_pv"], rel=1e-6)
    assert b.summary["rel_pw"] == a.summary["rel_pw"]


def test_emit_plots(tmp_path):
    rows = np.zeros((5, len(CSV_COLUMNS)))
    rows[:, 0] = np.arange(5) * 0.1
    rows[:, 7] = np.linspace(1, 0, 5)
    write_csv(tmp_path / "diagnostics.csv", CSV_COLUMNS, rows)
    paths = emit_plots(tmp_path / "diagnostics.csv")
    assert [p.name for p in paths] == ["bias_error_translation.svg", "bias_error_rotation.svg"]
    assert all("<svg" in p.read_text() and p.read_text().rstrip().endswith("</svg>") for p in paths)
