import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from singular_limits import io
from singular_limits.backward import GridFunction
from singular_limits.errors import ConfigError
from singular_limits.semidiscrete import LatticeState

MINIMAL = """
system = "burgers-shifted"
scheme = "semidiscrete"
t_final = 5.0
[window]
n_min = -10
n_max = 60
[initial]
kind = "riemann"
left = 0.4
right = 0.0
"""


def test_empty_config_lists_required_keys():
    with pytest.raises(ConfigError) as info:
        io.parse_config("")
    text = "\n".join(info.value.errors)
    for key in ("system", "scheme", "initial"):
        assert f"{key}: missing required key" in text or f"{key}: missing required table" in text


def test_minimal_config_gets_defaults():
    cfg = io.parse_config(MINIMAL)
    assert cfg.dt == 0.05 and cfg.snapshot_stride == 1 and cfg.seed == 0
    assert cfg.tv_budget == 0.1 and cfg.c0 == [1.0, 5.0, 10.0, 50.0] and cfg.slack == 1e-4
    assert cfg.initial.left == [0.4] and cfg.window == {"n_min": -10, "n_max": 60}


def test_negative_dt_names_the_key():
    bad = MINIMAL.replace('t_final = 5.0', 't_final = 5.0\ndt = -1')
    with pytest.raises(ConfigError) as info:
        io.parse_config(bad)
    assert any(err.startswith("dt:") for err in info.value.errors)


def test_unknown_and_multiple_errors_are_all_reported():
    bad = MINIMAL.replace('t_final = 5.0', 't_final = 5.0\nfoo = 1\nseed = "x"')
    bad = bad.replace("n_max = 60", "n_max = 60\nsize = 3")
    with pytest.raises(ConfigError) as info:
        io.parse_config(bad)
    errs = info.value.errors
    assert "foo: unknown key" in errs and "window.size: unknown key" in errs
    assert any(e.startswith("seed:") for e in errs)


def test_backward_config_requires_grid():
    text = 'system = "linear"\nscheme = "backward"\nsteps = 3\n[initial]\nkind = "spike"\n'
    with pytest.raises(ConfigError) as info:
        io.parse_config(text)
    assert any(e.startswith("grid:") for e in info.value.errors)


def test_toml_syntax_error():
    with pytest.raises(ConfigError):
        io.parse_config("system = ")


floats = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_subnormal=True)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(floats, floats), min_size=2, max_size=30), floats,
       st.floats(min_value=1e-6, max_value=10), st.booleans())
def test_profile_round_trip_is_bitwise(tmp_path_factory, rows, x_min, dx, with_slope):
    values = np.array(rows)
    slope = values[::-1] * 0.3 if with_slope else None
    prof = GridFunction(x_min, dx, values, values[0], slope)
    path = tmp_path_factory.mktemp("p") / "p.csv"
    io.write_profile(path, prof, "chromatography", step=7)
    back, meta = io.read_profile(path, "chromatography")
    assert back.x_min == x_min and back.dx == dx and meta["step"] == "7"
    assert np.array_equal(back.values, prof.values)
    assert np.array_equal(back.left_state, prof.left_state)
    if with_slope:
        assert np.array_equal(back.slope, prof.slope)
    else:
        assert back.slope is None


@settings(max_examples=40, deadline=None)
@given(st.lists(floats, min_size=1, max_size=30), st.integers(-1000, 1000),
       st.floats(min_value=0, max_value=1e4), floats)
def test_lattice_round_trip_is_bitwise(tmp_path_factory, cells, n_min, time, outflow):
    state = LatticeState(n_min, np.array(cells), [cells[0]], time, [outflow])
    path = tmp_path_factory.mktemp("l") / "l.csv"
    io.write_lattice(path, state, "burgers-shifted")
    back, _ = io.read_lattice(path)
    assert back.n_min == n_min and back.time == time
    assert np.array_equal(back.cells, state.cells)
    assert np.array_equal(back.outflow, state.outflow)


def test_system_mismatch_warns(tmp_path):
    path = tmp_path / "p.csv"
    io.write_profile(path, GridFunction(0.0, 0.1, np.zeros((3, 1)), [0.0]), "linear")
    with pytest.warns(UserWarning, match="linear"):
        io.read_profile(path, "burgers-shifted")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        io.read_profile(path, "linear")


def test_empty_file_reports_line_one(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(io.CSVFormatError) as info:
        io.read_profile(path)
    assert info.value.line == 1


def test_bad_row_reports_its_line(tmp_path):
    path = tmp_path / "p.csv"
    io.write_profile(path, GridFunction(0.0, 0.1, np.zeros((3, 1)), [0.0]))
    lines = path.read_text().splitlines()
    lines[3] = "0.1,abc"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(io.CSVFormatError) as info:
        io.read_profile(path)
    assert info.value.line == 4


def test_wrong_kind(tmp_path):
    path = tmp_path / "l.csv"
    io.write_lattice(path, LatticeState(0, np.zeros(3), [0.0]))
    with pytest.raises(io.CSVFormatError):
        io.read_profile(path)


def test_study_configs_need_no_run_sections():
    cfg = io.parse_config('system = "linear"\nscheme = "backward"\n[study]\nepsilons = [0.1]\n',
                          study=True)
    assert cfg.study.epsilons == [0.1] and cfg.grid is None
